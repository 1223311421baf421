#include "vmp/virtualize.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <variant>

#include "vmp/error.hpp"

namespace vmp {

namespace {

// Platform-stable bounded draw; std::uniform_int_distribution is
// not pinned by the standard, so output-affecting randomness goes
// through this instead.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[draw_below(rng, i)]);
}

// ------------------------------------------------------------
// Optimizer
// ------------------------------------------------------------

bool writes_flags(NativeOp op) {
    switch (op) {
        case NativeOp::Add:
        case NativeOp::Sub:
        case NativeOp::Inc:
        case NativeOp::Dec:
        case NativeOp::Cmp:
        case NativeOp::Test:
            return true;
        default:
            return false;
    }
}

bool is_cond_jump(NativeOp op) {
    return op == NativeOp::Je || op == NativeOp::Jle || op == NativeOp::Jg ||
           op == NativeOp::Jbe;
}

// True when the flag result of item `at` can never reach a
// conditional jump: some later flag writer shadows it first, or
// execution reaches ret (flags are dead at function exit).
// Labels and unconditional jumps end the scan conservatively.
bool flags_dead_after(const NativeProgram& p, std::size_t at) {
    for (std::size_t j = at + 1; j < p.items.size(); ++j) {
        if (std::holds_alternative<LabelDef>(p.items[j])) return false;
        const auto& i = std::get<NativeInstr>(p.items[j]);
        if (is_cond_jump(i.op)) return false;
        if (i.op == NativeOp::Jmp) return false;
        if (i.op == NativeOp::Ret) return true;
        if (writes_flags(i.op)) return true;
    }
    return false;
}

std::int64_t fold_arith(NativeOp op, std::int64_t a, std::int64_t b) {
    auto u = static_cast<std::uint64_t>(a);
    auto v = static_cast<std::uint64_t>(b);
    switch (op) {
        case NativeOp::Add: return static_cast<std::int64_t>(u + v);
        case NativeOp::Sub: return static_cast<std::int64_t>(u - v);
        case NativeOp::Mul: return static_cast<std::int64_t>(u * v);
        case NativeOp::And: return a & b;
        case NativeOp::Inc: return static_cast<std::int64_t>(u + 1);
        case NativeOp::Dec: return static_cast<std::int64_t>(u - 1);
        default: throw Error("fold_arith: not an arithmetic opcode");
    }
}

NativeProgram fold_constants(const NativeProgram& in) {
    NativeProgram out;
    std::array<std::optional<std::int64_t>, 8> known;
    auto reset = [&] { known.fill(std::nullopt); };
    reset();
    for (std::size_t idx = 0; idx < in.items.size(); ++idx) {
        const auto& item = in.items[idx];
        if (std::holds_alternative<LabelDef>(item)) {
            reset(); // join point: constants from fall-through are stale
            out.items.push_back(item);
            continue;
        }
        NativeInstr i = std::get<NativeInstr>(item);
        switch (i.op) {
            case NativeOp::Mov: {
                int d = i.operands[0].reg;
                if (i.operands[1].kind == Operand::Kind::Imm)
                    known[d] = i.operands[1].imm;
                else
                    known[d] = std::nullopt;
                break;
            }
            case NativeOp::Add:
            case NativeOp::Sub:
            case NativeOp::Mul:
            case NativeOp::And: {
                int d = i.operands[0].reg;
                if (i.operands[1].kind == Operand::Kind::Imm && known[d] &&
                    (!writes_flags(i.op) || flags_dead_after(in, idx))) {
                    std::int64_t v = fold_arith(i.op, *known[d], i.operands[1].imm);
                    i = NativeInstr{NativeOp::Mov, {Operand::make_reg(d), Operand::make_imm(v)}};
                    known[d] = v;
                } else {
                    known[d] = std::nullopt;
                }
                break;
            }
            case NativeOp::Inc:
            case NativeOp::Dec: {
                int d = i.operands[0].reg;
                if (known[d] && flags_dead_after(in, idx)) {
                    std::int64_t v = fold_arith(i.op, *known[d], 0);
                    i = NativeInstr{NativeOp::Mov, {Operand::make_reg(d), Operand::make_imm(v)}};
                    known[d] = v;
                } else {
                    known[d] = std::nullopt;
                }
                break;
            }
            case NativeOp::Load:
                known[i.operands[0].reg] = std::nullopt;
                break;
            default:
                break; // cmp/test/store/jumps/ret leave registers alone
        }
        out.items.push_back(std::move(i));
    }
    return out;
}

// Register read set of one instruction.
std::set<int> reads_of(const NativeInstr& i) {
    std::set<int> r;
    auto src = [&](const Operand& op) {
        if (op.kind == Operand::Kind::Reg) r.insert(op.reg);
    };
    switch (i.op) {
        case NativeOp::Mov:
        case NativeOp::Load:
            src(i.operands[1]);
            break;
        case NativeOp::Add:
        case NativeOp::Sub:
        case NativeOp::Mul:
        case NativeOp::And:
            src(i.operands[0]);
            src(i.operands[1]);
            break;
        case NativeOp::Cmp:
        case NativeOp::Test:
            src(i.operands[0]);
            src(i.operands[1]);
            break;
        case NativeOp::Inc:
        case NativeOp::Dec:
            src(i.operands[0]);
            break;
        case NativeOp::Store:
            src(i.operands[1]);
            break;
        default:
            break;
    }
    return r;
}

std::optional<int> write_of(const NativeInstr& i) {
    switch (i.op) {
        case NativeOp::Mov:
        case NativeOp::Add:
        case NativeOp::Sub:
        case NativeOp::Mul:
        case NativeOp::And:
        case NativeOp::Inc:
        case NativeOp::Dec:
        case NativeOp::Load:
            return i.operands[0].reg;
        default:
            return std::nullopt;
    }
}

// A write is dead when a mov/load fully overwrites the register
// before any read, within the same straight-line region.  Writes
// with flag effects are only dropped if those are dead too.
bool write_is_dead(const NativeProgram& p, std::size_t at) {
    const auto& instr = std::get<NativeInstr>(p.items[at]);
    auto w = write_of(instr);
    if (!w) return false;
    if (writes_flags(instr.op) && !flags_dead_after(p, at)) return false;
    for (std::size_t j = at + 1; j < p.items.size(); ++j) {
        if (std::holds_alternative<LabelDef>(p.items[j])) return false;
        const auto& i = std::get<NativeInstr>(p.items[j]);
        if (reads_of(i).count(*w)) return false;
        if ((i.op == NativeOp::Mov || i.op == NativeOp::Load) && i.operands[0].reg == *w)
            return true;
        if (is_native_jump(i.op) || i.op == NativeOp::Ret) return false;
    }
    return false;
}

NativeProgram eliminate_dead_writes(const NativeProgram& in) {
    NativeProgram out;
    for (std::size_t idx = 0; idx < in.items.size(); ++idx) {
        if (std::holds_alternative<NativeInstr>(in.items[idx]) && write_is_dead(in, idx))
            continue;
        out.items.push_back(in.items[idx]);
    }
    return out;
}

// ------------------------------------------------------------
// Virtualizer
// ------------------------------------------------------------

VmOp mirror_op(NativeOp op) {
    switch (op) {
        case NativeOp::Mov: return VmOp::Vmov;
        case NativeOp::Add: return VmOp::Vadd;
        case NativeOp::Sub: return VmOp::Vsub;
        case NativeOp::Mul: return VmOp::Vmul;
        case NativeOp::And: return VmOp::Vand;
        case NativeOp::Cmp: return VmOp::Vcmp;
        case NativeOp::Test: return VmOp::Vtest;
        case NativeOp::Inc: return VmOp::Vinc;
        case NativeOp::Dec: return VmOp::Vdec;
        case NativeOp::Load: return VmOp::Vload;
        case NativeOp::Store: return VmOp::Vstore;
        case NativeOp::Jmp: return VmOp::Vjmp;
        case NativeOp::Je: return VmOp::Vje;
        case NativeOp::Jle: return VmOp::Vjle;
        case NativeOp::Jg: return VmOp::Vjg;
        case NativeOp::Jbe: return VmOp::Vjbe;
        case NativeOp::Ret: return VmOp::Vret;
    }
    throw Error("mirror_op: unknown opcode");
}

VmOperand to_vm(const Operand& op) {
    switch (op.kind) {
        case Operand::Kind::Reg: return VmOperand::make_vreg(static_cast<std::uint64_t>(op.reg));
        case Operand::Kind::Imm: return VmOperand::make_imm(op.imm);
        case Operand::Kind::Mem: return VmOperand::make_mem(op.mem);
        case Operand::Kind::Label: return VmOperand::make_label(op.label);
    }
    throw Error("to_vm: unknown operand kind");
}

struct ProtoInstr {
    VmOp op;
    std::vector<VmOperand> operands;
};

// One emission unit of the expansion: either free-standing
// instructions, a pass-through label, or an L3 handler group that
// still needs its @handler_<kind><suffix> label assigned.
struct Emission {
    enum class Tag { Plain, Label, Group } tag;
    std::vector<ProtoInstr> instrs;
    std::string label;   // Tag::Label
    std::string kind;    // Tag::Group: "load", "store", or the opcode name
};

class Expander {
public:
    Expander(int level, std::uint64_t temp_base) : level_(level), base_(temp_base) {}

    std::vector<Emission> run(const NativeProgram& p) {
        std::vector<Emission> out;
        for (const auto& item : p.items) {
            if (const auto* l = std::get_if<LabelDef>(&item)) {
                out.push_back({Emission::Tag::Label, {}, l->name, {}});
                continue;
            }
            expand(std::get<NativeInstr>(item), out);
        }
        return out;
    }

private:
    int level_;
    std::uint64_t base_;

    VmOperand t(std::uint64_t k) const { return VmOperand::make_vtemp(base_ + k); }

    static void plain(std::vector<Emission>& out, ProtoInstr i) {
        out.push_back({Emission::Tag::Plain, {std::move(i)}, {}, {}});
    }

    static void group(std::vector<Emission>& out, std::string kind,
                      std::vector<ProtoInstr> instrs) {
        out.push_back({Emission::Tag::Group, std::move(instrs), {}, std::move(kind)});
    }

    // Emits `instrs` either flat (L1/L2) or as L3 handler groups.
    void emit(std::vector<Emission>& out,
              std::vector<std::pair<std::string, std::vector<ProtoInstr>>> groups) {
        for (auto& [kind, instrs] : groups) {
            if (level_ >= 3) {
                group(out, kind, std::move(instrs));
            } else {
                for (auto& i : instrs) plain(out, std::move(i));
            }
        }
    }

    void expand(const NativeInstr& n, std::vector<Emission>& out) {
        const VmOp vop = mirror_op(n.op);
        const std::string opname = native_op_name(n.op);

        if (is_native_jump(n.op) || n.op == NativeOp::Ret) {
            std::vector<VmOperand> ops;
            for (const auto& o : n.operands) ops.push_back(to_vm(o));
            plain(out, {vop, std::move(ops)});
            return;
        }
        if (level_ == 0) {
            std::vector<VmOperand> ops;
            for (const auto& o : n.operands) ops.push_back(to_vm(o));
            plain(out, {vop, std::move(ops)});
            return;
        }

        switch (n.op) {
            case NativeOp::Mov:
            case NativeOp::Add:
            case NativeOp::Sub:
            case NativeOp::Mul:
            case NativeOp::And: {
                VmOperand dst = to_vm(n.operands[0]);
                VmOperand src = to_vm(n.operands[1]);
                if (level_ == 1) {
                    emit(out, {{"", {{VmOp::Vload, {t(0), dst}},
                                     {VmOp::Vload, {t(1), src}},
                                     {vop, {t(0), t(1)}},
                                     {VmOp::Vstore, {dst, t(0)}}}}});
                } else {
                    emit(out, {{"load", {{VmOp::Vload, {t(0), dst}}}},
                               {"load", {{VmOp::Vload, {t(1), src}}}},
                               {opname, {{VmOp::Vmov, {t(2), t(0)}}, {vop, {t(2), t(1)}}}},
                               {"store", {{VmOp::Vmov, {t(0), t(2)}}, {VmOp::Vstore, {dst, t(0)}}}}});
                }
                break;
            }
            case NativeOp::Cmp:
            case NativeOp::Test: {
                VmOperand a = to_vm(n.operands[0]);
                VmOperand b = to_vm(n.operands[1]);
                if (level_ == 1) {
                    emit(out, {{"", {{VmOp::Vload, {t(0), a}},
                                     {VmOp::Vload, {t(1), b}},
                                     {vop, {t(0), t(1)}}}}});
                } else {
                    emit(out, {{"load", {{VmOp::Vload, {t(0), a}}}},
                               {"load", {{VmOp::Vload, {t(1), b}}}},
                               {opname, {{VmOp::Vmov, {t(2), t(0)}}, {vop, {t(2), t(1)}}}}});
                }
                break;
            }
            case NativeOp::Inc:
            case NativeOp::Dec: {
                VmOperand dst = to_vm(n.operands[0]);
                if (level_ == 1) {
                    emit(out, {{"", {{VmOp::Vload, {t(0), dst}},
                                     {vop, {t(0)}},
                                     {VmOp::Vstore, {dst, t(0)}}}}});
                } else {
                    emit(out, {{"load", {{VmOp::Vload, {t(0), dst}}}},
                               {opname, {{VmOp::Vmov, {t(1), t(0)}}, {vop, {t(1)}}}},
                               {"store", {{VmOp::Vmov, {t(0), t(1)}}, {VmOp::Vstore, {dst, t(0)}}}}});
                }
                break;
            }
            case NativeOp::Load: {
                VmOperand dst = to_vm(n.operands[0]);
                VmOperand src = to_vm(n.operands[1]);
                if (level_ == 1) {
                    emit(out, {{"", {{VmOp::Vload, {t(0), src}},
                                     {VmOp::Vstore, {dst, t(0)}}}}});
                } else {
                    emit(out, {{"load", {{VmOp::Vload, {t(0), src}}}},
                               {"store", {{VmOp::Vmov, {t(1), t(0)}}, {VmOp::Vstore, {dst, t(1)}}}}});
                }
                break;
            }
            case NativeOp::Store: {
                VmOperand dst = to_vm(n.operands[0]);
                VmOperand src = to_vm(n.operands[1]);
                if (level_ == 1) {
                    emit(out, {{"", {{VmOp::Vload, {t(0), src}},
                                     {VmOp::Vstore, {dst, t(0)}}}}});
                } else {
                    emit(out, {{"load", {{VmOp::Vload, {t(0), src}}}},
                               {"store", {{VmOp::Vmov, {t(1), t(0)}}, {VmOp::Vstore, {dst, t(1)}}}}});
                }
                break;
            }
            default:
                throw Error("expand: unexpected opcode");
        }
    }
};

} // namespace

ProtectionLevel::ProtectionLevel(int v) : value(v) {
    if (v < -1 || v > 3)
        throw Error("protection level out of range: " + std::to_string(v));
}

ProtectionLevel parse_protection_level(const std::string& s) {
    if (s == "source" || s == "-1") return ProtectionLevel(-1);
    if (s.size() == 2 && (s[0] == 'L' || s[0] == 'l') && s[1] >= '0' && s[1] <= '3')
        return ProtectionLevel(s[1] - '0');
    if (s.size() == 1 && s[0] >= '0' && s[0] <= '3') return ProtectionLevel(s[0] - '0');
    throw Error("bad protection level: " + s);
}

std::string protection_level_name(int level) {
    if (level == -1) return "source";
    if (level >= 0 && level <= 3) return "L" + std::to_string(level);
    throw Error("protection level out of range: " + std::to_string(level));
}

OptLevel parse_opt_level(const std::string& s) {
    if (s == "O0" || s == "0") return OptLevel::O0;
    if (s == "O1" || s == "1") return OptLevel::O1;
    if (s == "O2" || s == "2") return OptLevel::O2;
    throw Error("bad optimization level: " + s);
}

const char* opt_level_name(OptLevel o) {
    switch (o) {
        case OptLevel::O0: return "O0";
        case OptLevel::O1: return "O1";
        case OptLevel::O2: return "O2";
    }
    return "";
}

NativeProgram optimize(const NativeProgram& p, OptLevel level) {
    if (level == OptLevel::O0) return p;
    NativeProgram out = fold_constants(p);
    if (level == OptLevel::O2) out = eliminate_dead_writes(out);
    return out;
}

VmProgram virtualize(const NativeProgram& p, ProtectionLevel level, PolySeed seed) {
    if (level.value < 0)
        throw Error("virtualize requires a protection level of L0 or higher");
    std::mt19937_64 rng(seed.seed);
    // %vt numbering offset: the polymorphic part of register naming.
    std::uint64_t temp_base = draw_below(rng, 101);

    Expander ex(level.value, temp_base);
    std::vector<Emission> emissions = ex.run(p);

    // Existing label names must stay untouched; handler names dodge them.
    std::set<std::string> taken;
    for (const auto& e : emissions)
        if (e.tag == Emission::Tag::Label) taken.insert(e.label);

    // Assign handler suffixes: per kind, a seeded permutation of 1..n.
    std::map<std::string, std::vector<std::size_t>> group_positions;
    for (std::size_t i = 0; i < emissions.size(); ++i)
        if (emissions[i].tag == Emission::Tag::Group)
            group_positions[emissions[i].kind].push_back(i);
    std::map<std::size_t, std::string> handler_names;
    for (auto& [kind, positions] : group_positions) {
        std::vector<std::uint64_t> suffixes(positions.size());
        for (std::size_t i = 0; i < suffixes.size(); ++i) suffixes[i] = i + 1;
        seeded_shuffle(suffixes, rng);
        for (std::size_t i = 0; i < positions.size(); ++i) {
            std::string name = "handler_" + kind + std::to_string(suffixes[i]);
            while (taken.count(name)) name += "_h";
            taken.insert(name);
            handler_names[positions[i]] = name;
        }
    }

    VmProgram out;
    std::uint64_t marker = 1;
    auto put = [&](const ProtoInstr& i) {
        out.items.emplace_back(VmInstr{marker++, i.op, i.operands});
    };
    for (std::size_t i = 0; i < emissions.size(); ++i) {
        const auto& e = emissions[i];
        switch (e.tag) {
            case Emission::Tag::Label:
                out.items.emplace_back(LabelDef{e.label});
                break;
            case Emission::Tag::Plain:
                for (const auto& pi : e.instrs) put(pi);
                break;
            case Emission::Tag::Group: {
                const std::string& name = handler_names.at(i);
                put({VmOp::Vjmp, {VmOperand::make_label(name)}});
                out.items.emplace_back(LabelDef{name});
                for (const auto& pi : e.instrs) put(pi);
                break;
            }
        }
    }
    return out;
}

double expansion_ratio(const NativeProgram& native, const VmProgram& vm) {
    std::size_t n = count_instrs(native);
    if (n == 0) throw Error("expansion ratio undefined for an empty native program");
    return static_cast<double>(count_instrs(vm)) / static_cast<double>(n);
}

} // namespace vmp
