#include "vmp/dataset.hpp"

#include <array>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vmp/error.hpp"
#include "vmp/normalize.hpp"

namespace vmp {

namespace {

using ordered_json = nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;
}

// ------------------------------------------------------------
// Program generator
//
// Variables v0..v5 live in r0..r5; r7 is the loop counter.  The
// source text and the native lowering are produced side by side.
// Immediates and memory indices are drawn from small ranges so a
// modest corpus covers the whole token vocabulary.
// ------------------------------------------------------------

struct GenContext {
    std::mt19937_64 rng;
    std::vector<std::string> src;
    NativeProgram native;
    std::array<bool, 6> declared = {true, true, true,
                                    false, false, false}; // v0..v2 are parameters

    explicit GenContext(std::uint64_t seed) : rng(seed) {}

    void emit(NativeInstr i) { native.items.emplace_back(std::move(i)); }

    int pick_declared() {
        std::vector<int> ds;
        for (int i = 0; i < 6; ++i)
            if (declared[i]) ds.push_back(i);
        return ds[draw_below(rng, ds.size())];
    }

    // One `v<d> = v<a> <op> (v<b> | imm);` statement and its lowering.
    void statement(const std::string& indent) {
        static const struct {
            const char* sym;
            NativeOp op;
        } kOps[] = {{"+", NativeOp::Add}, {"-", NativeOp::Sub},
                    {"*", NativeOp::Mul}, {"&", NativeOp::And}};
        int d = static_cast<int>(draw_below(rng, 6));
        int a = pick_declared();
        const auto& op = kOps[draw_below(rng, 4)];
        bool use_imm = draw_below(rng, 2) == 0;
        std::int64_t imm = static_cast<std::int64_t>(draw_below(rng, 64));
        int b = pick_declared();
        // rd is written by the mov below before the op reads rb
        while (!use_imm && b == d) b = pick_declared();

        std::string rhs = "v" + std::to_string(a) + " " + op.sym + " " +
                          (use_imm ? std::to_string(imm) : "v" + std::to_string(b));
        std::string lhs = "v" + std::to_string(d);
        if (!declared[d]) {
            src.push_back(indent + "long " + lhs + " = " + rhs + ";");
            declared[d] = true;
        } else {
            src.push_back(indent + lhs + " = " + rhs + ";");
        }

        Operand src_op = use_imm ? Operand::make_imm(imm) : Operand::make_reg(b);
        if (d != a) emit({NativeOp::Mov, {Operand::make_reg(d), Operand::make_reg(a)}});
        emit({op.op, {Operand::make_reg(d), src_op}});
    }

    void store() {
        int k = static_cast<int>(draw_below(rng, 16));
        int v = pick_declared();
        src.push_back("  mem[" + std::to_string(k) + "] = v" + std::to_string(v) + ";");
        emit({NativeOp::Store, {Operand::make_mem(k), Operand::make_reg(v)}});
    }

    void finish() {
        int v = pick_declared();
        src.push_back("  return v" + std::to_string(v) + ";");
        src.push_back("}");
        if (v != 0) emit({NativeOp::Mov, {Operand::make_reg(0), Operand::make_reg(v)}});
        emit({NativeOp::Ret, {}});
    }
};

} // namespace

GeneratedFunction gen_program(std::uint64_t seed, SizeClass size_class) {
    GenContext g(seed);
    std::string name = "fn" + std::to_string(seed % 1000000);
    g.src.push_back("long " + name + "(long v0, long v1, long v2) {");

    if (size_class == SizeClass::Straightline) {
        std::size_t n = 3 + draw_below(g.rng, 6); // 3..8 statements
        for (std::size_t i = 0; i < n; ++i) g.statement("  ");
        std::size_t stores = 1 + draw_below(g.rng, 2);
        for (std::size_t i = 0; i < stores; ++i) g.store();
    } else {
        std::size_t pre = 1 + draw_below(g.rng, 3);
        for (std::size_t i = 0; i < pre; ++i) g.statement("  ");
        std::uint64_t trips = 2 + draw_below(g.rng, 11); // 2..12 iterations
        g.src.push_back("  for (long i = " + std::to_string(trips) + "; i > 0; i = i - 1) {");
        g.emit({NativeOp::Mov,
                {Operand::make_reg(7), Operand::make_imm(static_cast<std::int64_t>(trips))}});
        g.native.items.emplace_back(LabelDef{"loop"});
        auto outer_scope = g.declared; // body declarations stay loop-local
        std::size_t body = 1 + draw_below(g.rng, 3);
        for (std::size_t i = 0; i < body; ++i) g.statement("    ");
        g.src.push_back("  }");
        g.declared = outer_scope;
        g.emit({NativeOp::Dec, {Operand::make_reg(7)}});
        g.emit({NativeOp::Jg, {Operand::make_label("loop")}});
        g.store();
    }
    g.finish();

    GeneratedFunction out;
    out.native = std::move(g.native);
    for (const auto& line : g.src) out.source_text += line + "\n";
    return out;
}

std::string render_prompt(const std::string& source_text, int protection_level) {
    return "# This is the source code with " + protection_level_name(protection_level) +
           " protection: " + source_text;
}

std::uint64_t function_seed(std::uint64_t dataset_seed, std::size_t index) {
    return splitmix64(dataset_seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

SizeClass function_size_class(std::uint64_t dataset_seed, std::size_t index) {
    return splitmix64(function_seed(dataset_seed, index)) % 2 == 0 ? SizeClass::Straightline
                                                                   : SizeClass::Loop;
}

std::uint64_t poly_seed_for(std::uint64_t dataset_seed, std::size_t index, OptLevel opt,
                            int protection_level) {
    std::uint64_t mix = function_seed(dataset_seed, index);
    mix = splitmix64(mix ^ (static_cast<std::uint64_t>(opt) + 11));
    return splitmix64(mix ^ (static_cast<std::uint64_t>(protection_level) + 101));
}

Dataset build_dataset(std::size_t n_functions, const std::vector<OptLevel>& opts,
                      const std::vector<int>& protection_levels, std::uint64_t seed) {
    if (opts.empty() || protection_levels.empty())
        throw Error("build_dataset: need at least one optimization and protection level");
    for (int l : protection_levels)
        if (l < 0 || l > 3)
            throw Error("build_dataset: protection levels must be in L0..L3");
    Dataset ds;
    ds.seed = seed;
    ds.n_functions = n_functions;
    ds.opt_levels = opts;
    ds.protection_levels = protection_levels;
    char idbuf[24];
    for (std::size_t i = 0; i < n_functions; ++i) {
        GeneratedFunction f = gen_program(function_seed(seed, i), function_size_class(seed, i));
        std::snprintf(idbuf, sizeof idbuf, "f%06zu", i);
        for (OptLevel o : opts) {
            NativeProgram opt = optimize(f.native, o);
            for (int l : protection_levels) {
                VmProgram vm = virtualize(opt, ProtectionLevel(l), {poly_seed_for(seed, i, o, l)});
                DatasetRecord rec;
                rec.function_id = idbuf;
                rec.opt_level = opt_level_name(o);
                rec.protection_level = l;
                rec.source_text = f.source_text;
                rec.normalized_vm_text = serialize(normalize(vm));
                rec.prompt = render_prompt(f.source_text, l);
                ds.records.push_back(std::move(rec));
            }
        }
    }
    return ds;
}

std::string dataset_to_text(const Dataset& ds) {
    ordered_json header;
    header["format"] = "vmp-dataset";
    header["version"] = ds.version;
    header["seed"] = ds.seed;
    header["n_functions"] = ds.n_functions;
    {
        std::vector<std::string> names;
        for (OptLevel o : ds.opt_levels) names.push_back(opt_level_name(o));
        header["opt_levels"] = names;
    }
    header["protection_levels"] = ds.protection_levels;
    std::string out = header.dump() + "\n";
    for (const auto& r : ds.records) {
        ordered_json j;
        j["function_id"] = r.function_id;
        j["opt_level"] = r.opt_level;
        j["protection_level"] = r.protection_level;
        j["source_text"] = r.source_text;
        j["normalized_vm_text"] = r.normalized_vm_text;
        j["prompt"] = r.prompt;
        out += j.dump() + "\n";
    }
    return out;
}

Dataset dataset_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("dataset: empty file");
    Dataset ds;
    try {
        ordered_json header = ordered_json::parse(line);
        if (header.at("format") != "vmp-dataset")
            throw Error("dataset: unrecognized format field");
        ds.version = header.at("version").get<int>();
        if (ds.version != 1)
            throw Error("dataset: unsupported version " + std::to_string(ds.version));
        ds.seed = header.at("seed").get<std::uint64_t>();
        ds.n_functions = header.at("n_functions").get<std::size_t>();
        for (const auto& s : header.at("opt_levels"))
            ds.opt_levels.push_back(parse_opt_level(s.get<std::string>()));
        for (const auto& l : header.at("protection_levels"))
            ds.protection_levels.push_back(l.get<int>());
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            ordered_json j = ordered_json::parse(line);
            DatasetRecord r;
            r.function_id = j.at("function_id").get<std::string>();
            r.opt_level = j.at("opt_level").get<std::string>();
            r.protection_level = j.at("protection_level").get<int>();
            r.source_text = j.at("source_text").get<std::string>();
            r.normalized_vm_text = j.at("normalized_vm_text").get<std::string>();
            r.prompt = j.at("prompt").get<std::string>();
            ds.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("dataset: malformed JSON line: ") + e.what());
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << dataset_to_text(ds);
    if (!f) throw Error("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open dataset file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return dataset_from_text(ss.str());
}

} // namespace vmp
