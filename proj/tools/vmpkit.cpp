// vmpkit: one binary for the whole pipeline -- virtualize native
// programs, normalize VM text, inspect attention masks, generate
// datasets, train embeddings, and evaluate retrieval quality.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmp/dataset.hpp"
#include "vmp/embed.hpp"
#include "vmp/error.hpp"
#include "vmp/exec.hpp"
#include "vmp/mask.hpp"
#include "vmp/metrics.hpp"
#include "vmp/normalize.hpp"
#include "vmp/virtualize.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw vmp::Error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw vmp::Error("cannot open for writing: " + path);
    f << text;
    if (!f) throw vmp::Error("write failed: " + path);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---------------------------------------------------------
// eval: retrieval units are (function, opt level) pairs; each
// unit at the lightest VM level queries a pool of K candidates
// at the heaviest level.  The pool holds the unit's own heavy
// variant plus the next K-1 other-function units in cyclic
// order, so runs are deterministic without extra flags.
// ---------------------------------------------------------

struct EvalUnit {
    std::string function_id;
    std::vector<double> light;
    std::vector<double> heavy;
};

int run_eval(const std::string& ckpt, const std::string& dataset_path,
             const std::string& k_list, const std::string& report_path) {
    vmp::EmbedModel model = vmp::load_model(ckpt);
    vmp::Dataset ds = vmp::read_dataset(dataset_path);

    int light = 99, heavy = -1;
    for (int l : ds.protection_levels) {
        light = std::min(light, l);
        heavy = std::max(heavy, l);
    }
    if (light >= heavy)
        throw vmp::Error("eval needs a dataset with at least two protection levels");

    std::map<std::string, EvalUnit> by_unit;
    std::vector<vmp::EmbeddingRecord> geometry;
    for (const auto& r : ds.records) {
        std::string key = r.function_id + "/" + r.opt_level;
        auto emb = vmp::embed_function(model, key, r.protection_level, r.normalized_vm_text);
        geometry.push_back(emb);
        EvalUnit& u = by_unit[key];
        u.function_id = r.function_id;
        if (r.protection_level == light) u.light = emb.vec;
        if (r.protection_level == heavy) u.heavy = emb.vec;
    }
    std::vector<EvalUnit> units;
    for (auto& [key, u] : by_unit) {
        (void)key;
        if (u.light.empty() || u.heavy.empty())
            throw vmp::Error("eval: every function needs both the lightest and heaviest level");
        units.push_back(std::move(u));
    }

    std::vector<vmp::MetricLine> lines;
    for (const std::string& ks : split_commas(k_list)) {
        std::size_t k = 0;
        try {
            k = static_cast<std::size_t>(std::stoull(ks));
        } catch (const std::exception&) {
            throw vmp::Error("bad pool size '" + ks + "'");
        }
        if (k < 2) throw vmp::Error("pool size must be at least 2");
        std::vector<vmp::RetrievalCase> cases;
        for (std::size_t qi = 0; qi < units.size(); ++qi) {
            vmp::RetrievalCase c;
            c.query = units[qi].light;
            c.pool.push_back(units[qi].heavy);
            c.positive = 0;
            for (std::size_t step = 1; c.pool.size() < k; ++step) {
                if (step >= units.size())
                    throw vmp::Error("pool size " + std::to_string(k) +
                                     " exceeds the functions available");
                std::size_t ci = (qi + step) % units.size();
                if (units[ci].function_id == units[qi].function_id) continue;
                c.pool.push_back(units[ci].heavy);
            }
            cases.push_back(std::move(c));
        }
        std::string setting = "K=" + std::to_string(k);
        lines.push_back({"recall@1", setting, vmp::recall_at_k(cases, 1)});
        lines.push_back({"mrr", setting, vmp::mean_reciprocal_rank(cases)});
    }

    // geometry over protection levels, plus the source level
    for (const auto& r : ds.records) {
        std::string key = r.function_id + "/" + r.opt_level;
        if (r.protection_level == light)
            geometry.push_back(vmp::embed_function(model, key, -1, r.source_text));
    }
    std::vector<std::vector<double>> points;
    std::vector<int> labels;
    for (const auto& g : geometry) {
        points.push_back(g.vec);
        labels.push_back(g.level);
    }
    vmp::ClusterDistances cd = vmp::cluster_distances(points, labels);
    lines.push_back({"silhouette", "levels", vmp::silhouette(points, labels)});
    lines.push_back({"intra_cluster", "levels", cd.intra});
    lines.push_back({"inter_cluster", "levels", cd.inter});

    vmp::LossConfig cfg;
    vmp::MonotonicityReport rep = vmp::monotonicity_report(geometry, cfg);
    for (const auto& s : rep.stats) {
        std::string setting = vmp::protection_level_name(s.level_lo) + ">" +
                              vmp::protection_level_name(s.level_hi);
        lines.push_back({"mean_distance", setting, s.mean_distance});
        lines.push_back({"std_distance", setting, s.stddev_distance});
        lines.push_back({"violation_rate", setting,
                         s.pairs ? static_cast<double>(s.violations) / s.pairs : 0.0});
    }
    lines.push_back({"violation_rate", "overall", rep.violation_rate});
    lines.push_back({"mean_increases_with_gap", "overall",
                     rep.mean_increases_with_gap ? 1.0 : 0.0});

    write_file(report_path, vmp::render_metrics(lines));
    std::cout << vmp::render_metrics(lines);
    return 0;
}

// ---------------------------------------------------------
// check: fast property sweeps, nonzero exit on any failure
// ---------------------------------------------------------

double fd_slope(std::vector<double>& x, std::size_t j, const std::function<double()>& f) {
    const double h = 1e-5;
    double keep = x[j];
    x[j] = keep + h;
    double up = f();
    x[j] = keep - h;
    double dn = f();
    x[j] = keep;
    return (up - dn) / (2 * h);
}

bool grad_close(double analytic, double fd) {
    double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
    return std::abs(analytic - fd) / denom < 1e-4;
}

int run_check() {
    std::size_t failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "ok   " : "FAIL ") << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    };

    // interpreter equivalence across levels
    {
        std::size_t bad = 0;
        std::mt19937_64 rng(12345);
        for (int i = 0; i < 200; ++i) {
            auto gen = vmp::gen_program(0xABCD0000ull + i,
                                        i % 3 ? vmp::SizeClass::Straightline
                                              : vmp::SizeClass::Loop);
            for (int level = 0; level <= 3; ++level) {
                vmp::VmProgram vmprog = vmp::virtualize(
                    gen.native, vmp::ProtectionLevel(level), vmp::PolySeed{rng()});
                for (int s = 0; s < 5; ++s) {
                    vmp::MachineState in;
                    for (auto& r : in.regs) r = static_cast<std::int64_t>(rng() % 2001) - 1000;
                    for (int m = 0; m < 8; ++m) in.mem[rng() % in.mem.size()] =
                        static_cast<std::int64_t>(rng() % 2001) - 1000;
                    if (!vmp::states_agree(vmp::exec_native(gen.native, in),
                                           vmp::exec_vm(vmprog, in)))
                        ++bad;
                }
            }
        }
        report("interpreter equivalence, 200 programs x L0-L3 x 5 states", bad == 0,
               bad ? std::to_string(bad) + " disagreements" : "");
    }

    // analytic gradients vs central differences
    {
        std::mt19937_64 rng(777);
        auto u = [&] { return (static_cast<double>(rng() >> 11) * 0x1p-53) * 2.0 - 1.0; };
        std::size_t bad = 0;
        vmp::LossConfig cfg;
        for (int trial = 0; trial < 20 && bad == 0; ++trial) {
            std::vector<vmp::EmbeddingRecord> batch;
            for (int f = 0; f < 3; ++f)
                for (int lvl : {-1, 0, 2}) {
                    vmp::EmbeddingRecord r;
                    r.function_id = "f" + std::to_string(f);
                    r.level = lvl;
                    for (int j = 0; j < 8; ++j) r.vec.push_back(u());
                    batch.push_back(std::move(r));
                }
            for (int variant = 0; variant < 3 && bad == 0; ++variant) {
                cfg.pcl_variant =
                    variant == 1 ? vmp::PclVariant::AsWritten : vmp::PclVariant::LowerBound;
                auto loss_of = [&] {
                    return variant == 0 ? vmp::fcl_loss(batch, cfg).value
                                        : vmp::pcl_loss(batch, cfg).value;
                };
                auto res = variant == 0 ? vmp::fcl_loss(batch, cfg) : vmp::pcl_loss(batch, cfg);
                for (std::size_t i = 0; i < batch.size() && bad == 0; ++i)
                    for (std::size_t j = 0; j < batch[i].vec.size(); ++j) {
                        double fd = fd_slope(batch[i].vec, j, loss_of);
                        if (!grad_close(res.grads[i][j], fd)) {
                            ++bad;
                            break;
                        }
                    }
            }
            // peo
            std::vector<double> q, p;
            std::vector<std::vector<double>> cands(6);
            for (int j = 0; j < 8; ++j) {
                q.push_back(u());
                p.push_back(u());
            }
            for (auto& c : cands)
                for (int j = 0; j < 8; ++j) c.push_back(u());
            auto res = vmp::peo_loss(q, p, cands, cfg);
            auto peo_of = [&] { return vmp::peo_loss(q, p, cands, cfg).value; };
            for (std::size_t j = 0; j < q.size() && bad == 0; ++j) {
                if (!grad_close(res.grad_query[j], fd_slope(q, j, peo_of))) ++bad;
                if (!grad_close(res.grad_positive[j], fd_slope(p, j, peo_of))) ++bad;
            }
            for (std::size_t c = 0; c < cands.size() && bad == 0; ++c) {
                if (res.grad_candidates[c].empty()) continue;
                for (std::size_t j = 0; j < q.size() && bad == 0; ++j)
                    if (!grad_close(res.grad_candidates[c][j], fd_slope(cands[c], j, peo_of)))
                        ++bad;
            }
        }
        report("loss gradients vs central finite differences", bad == 0);
    }

    // mask expressivity, exhaustive small shapes + generated programs
    {
        std::uint64_t checked = 0;
        std::size_t bad = 0;
        for (int T = 1; T <= 8; ++T)
            for (int m = 1; m <= 4; ++m) {
                vmp::TokenizedFunction f;
                f.instr_count = T;
                for (int t = 1; t <= T; ++t) {
                    f.tokens_per_instr.push_back(m);
                    for (int k = 1; k <= m; ++k)
                        f.tokens.push_back({"x", false, t, k});
                    f.tokens.push_back({"[VINST-" + std::to_string(t) + "]", true, t, 0});
                }
                auto rep = vmp::expressivity_check(f);
                checked += rep.checked_pairs;
                bad += rep.violations.size();
            }
        for (int i = 0; i < 20; ++i) {
            auto gen = vmp::gen_program(0xFACE0000ull + i, vmp::SizeClass::Straightline);
            vmp::VmProgram vmprog =
                vmp::virtualize(gen.native, vmp::ProtectionLevel(3), vmp::PolySeed{7});
            auto rep = vmp::expressivity_check(vmp::tokenize_vm(vmprog));
            checked += rep.checked_pairs;
            bad += rep.violations.size();
        }
        report("mask expressivity two-hop property", bad == 0,
               std::to_string(checked) + " pairs");
    }

    if (failures) {
        std::cerr << failures << " property suite(s) failed\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"VMP-style virtualization, normalization, masking, and embedding toolkit"};
    app.require_subcommand(1);

    std::string in_path, out_path;
    std::string level_str = "L1";
    std::uint64_t seed = 0;

    auto* virt = app.add_subcommand("virtualize", "Translate native text to VM text");
    virt->add_option("--level", level_str, "Protection level L0..L3")
        ->check(CLI::IsMember({"L0", "L1", "L2", "L3", "0", "1", "2", "3"}));
    virt->add_option("--seed", seed, "Polymorphism seed");
    virt->add_option("in", in_path, "Native program file")->required();
    virt->add_option("out", out_path, "VM program file")->required();

    auto* norm = app.add_subcommand("normalize", "Canonicalize VM text");
    norm->add_option("in", in_path, "VM program file")->required();
    norm->add_option("out", out_path, "Normalized VM program file")->required();

    std::string variant_str = "decoder";
    auto* mask = app.add_subcommand("mask", "Emit the hierarchical attention mask");
    mask->add_option("--variant", variant_str, "decoder or encoder")
        ->check(CLI::IsMember({"decoder", "encoder"}));
    mask->add_option("in", in_path, "VM program file")->required();
    mask->add_option("out", out_path, "Mask matrix file")->required();

    std::size_t n_functions = 0;
    std::string opts_str = "O0", levels_str = "0,1,2,3";
    auto* gen = app.add_subcommand("gen-dataset", "Generate a synthetic dataset");
    gen->add_option("--functions", n_functions, "Number of functions")->required();
    gen->add_option("--opts", opts_str, "Comma-separated optimization levels (O0,O1,O2)");
    gen->add_option("--levels", levels_str, "Comma-separated protection levels");
    gen->add_option("--seed", seed, "Dataset seed");
    gen->add_option("out", out_path, "Output dataset file")->required();

    std::string config_path, dataset_path, ckpt_path;
    auto* train = app.add_subcommand("train", "Train embeddings on a dataset");
    train->add_option("--config", config_path, "key=value settings file");
    train->add_option("--dataset", dataset_path, "Dataset file")->required();
    train->add_option("--out", ckpt_path, "Checkpoint file")->required();

    std::string k_list = "50,100,200,500";
    auto* eval = app.add_subcommand("eval", "Evaluate retrieval and geometry");
    eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
    eval->add_option("--dataset", dataset_path, "Dataset file")->required();
    eval->add_option("--k", k_list, "Comma-separated pool sizes");
    eval->add_option("report", out_path, "Report file")->required();

    auto* check = app.add_subcommand("check", "Run the property suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (virt->parsed()) {
            vmp::NativeProgram p = vmp::parse_native(read_file(in_path));
            vmp::VmProgram vmprog =
                vmp::virtualize(p, vmp::parse_protection_level(level_str), vmp::PolySeed{seed});
            write_file(out_path, vmp::serialize(vmprog));
        } else if (norm->parsed()) {
            write_file(out_path, vmp::normalize_text(read_file(in_path)));
        } else if (mask->parsed()) {
            vmp::VmProgram p = vmp::parse_vm(read_file(in_path));
            vmp::TokenizedFunction f = vmp::tokenize_vm(p);
            auto variant = variant_str == "decoder" ? vmp::AttnMask::Variant::Decoder
                                                    : vmp::AttnMask::Variant::EncoderLiteral;
            write_file(out_path, vmp::mask_to_text(vmp::build_hier_mask(f, variant)));
            std::cout << vmp::expressivity_check(f).to_string() << "\n";
        } else if (gen->parsed()) {
            std::vector<vmp::OptLevel> opts;
            for (const auto& s : split_commas(opts_str)) opts.push_back(vmp::parse_opt_level(s));
            std::vector<int> levels;
            for (const auto& s : split_commas(levels_str))
                levels.push_back(vmp::parse_protection_level(s).value);
            vmp::write_dataset(vmp::build_dataset(n_functions, opts, levels, seed), out_path);
        } else if (train->parsed()) {
            vmp::TrainSettings settings;
            if (!config_path.empty()) settings = vmp::load_train_settings(config_path);
            vmp::Dataset ds = vmp::read_dataset(dataset_path);
            vmp::TrainResult res = vmp::train(ds, settings.loss, settings.run);
            for (const auto& t : res.trace)
                std::cout << t.stage << " " << t.epoch << " lm=" << fmt6(t.lm)
                          << " fcl=" << fmt6(t.fcl) << " pcl=" << fmt6(t.pcl)
                          << " vmp=" << fmt6(t.vmp) << " peo=" << fmt6(t.peo) << "\n";
            vmp::save_model(res.model, ckpt_path);
        } else if (eval->parsed()) {
            return run_eval(ckpt_path, dataset_path, k_list, out_path);
        } else if (check->parsed()) {
            return run_check();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
