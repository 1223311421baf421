#include "vmp/exec.hpp"

#include <variant>

#include "vmp/error.hpp"

namespace vmp {

namespace {

// Signed-64 wrapping arithmetic; the unsigned round trip keeps it
// out of UB territory.
std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
std::int64_t wrap_sub(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
std::int64_t wrap_mul(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

std::int64_t mem_at(const MachineState& st, std::int64_t idx) {
    if (idx < 0 || idx >= static_cast<std::int64_t>(st.mem.size()))
        throw ExecError("memory index out of range: " + std::to_string(idx));
    return st.mem[static_cast<std::size_t>(idx)];
}

void mem_set(MachineState& st, std::int64_t idx, std::int64_t v) {
    if (idx < 0 || idx >= static_cast<std::int64_t>(st.mem.size()))
        throw ExecError("memory index out of range: " + std::to_string(idx));
    st.mem[static_cast<std::size_t>(idx)] = v;
}

void set_flags(MachineState& st, std::int64_t result) {
    st.zf = (result == 0);
    st.sf = (result < 0);
}

// With only ZF/SF in the flags model, jbe coincides with jle.
bool jump_taken(NativeOp op, const MachineState& st) {
    switch (op) {
        case NativeOp::Jmp: return true;
        case NativeOp::Je: return st.zf;
        case NativeOp::Jle: return st.zf || st.sf;
        case NativeOp::Jg: return !st.zf && !st.sf;
        case NativeOp::Jbe: return st.zf || st.sf;
        default: return false;
    }
}

template <typename Program>
std::map<std::string, std::size_t> label_index(const Program& p) {
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < p.items.size(); ++i)
        if (const auto* l = std::get_if<LabelDef>(&p.items[i])) {
            if (idx.count(l->name)) throw ExecError("duplicate label: @" + l->name);
            idx[l->name] = i;
        }
    return idx;
}

std::size_t jump_target(const std::map<std::string, std::size_t>& labels,
                        const std::string& name) {
    auto it = labels.find(name);
    if (it == labels.end()) throw ExecError("undefined label: @" + name);
    return it->second;
}

void count_step(MachineState& st, std::uint64_t limit) {
    if (++st.steps > limit)
        throw ExecError("step limit exceeded (" + std::to_string(limit) + ")");
}

// --- native operand access ---

std::int64_t value_of(const MachineState& st, const Operand& op) {
    switch (op.kind) {
        case Operand::Kind::Reg: return st.regs[static_cast<std::size_t>(op.reg)];
        case Operand::Kind::Imm: return op.imm;
        case Operand::Kind::Mem: return mem_at(st, op.mem);
        case Operand::Kind::Label: throw ExecError("label operand has no value");
    }
    return 0;
}

// --- vm operand access ---

std::string vreg_key(const VmOperand& op) {
    return (op.kind == VmOperand::Kind::VReg ? "%vr" : "%vt") + std::to_string(op.index);
}

std::int64_t value_of(const MachineState& st, const VmOperand& op) {
    switch (op.kind) {
        case VmOperand::Kind::VReg:
            if (op.index < st.regs.size()) return st.regs[static_cast<std::size_t>(op.index)];
            [[fallthrough]];
        case VmOperand::Kind::VTemp: {
            auto it = st.vregs.find(vreg_key(op));
            return it == st.vregs.end() ? 0 : it->second;
        }
        case VmOperand::Kind::Imm: return op.imm;
        case VmOperand::Kind::Mem: return mem_at(st, op.mem);
        case VmOperand::Kind::Label: throw ExecError("label operand has no value");
    }
    return 0;
}

void reg_set(MachineState& st, const VmOperand& op, std::int64_t v) {
    if (op.kind == VmOperand::Kind::VReg && op.index < st.regs.size()) {
        st.regs[static_cast<std::size_t>(op.index)] = v;
        return;
    }
    st.vregs[vreg_key(op)] = v;
}

} // namespace

bool states_agree(const MachineState& native_out, const MachineState& vm_out) {
    return native_out.regs == vm_out.regs && native_out.mem == vm_out.mem &&
           native_out.zf == vm_out.zf && native_out.sf == vm_out.sf;
}

MachineState exec_native(const NativeProgram& p, const MachineState& input,
                         std::uint64_t step_limit) {
    if (count_instrs(p) == 0) return input; // nothing to run
    MachineState st = input;
    st.pc = 0;
    st.steps = 0;
    st.halted = false;
    auto labels = label_index(p);
    while (!st.halted) {
        if (st.pc >= p.items.size()) throw ExecError("program ended without ret");
        const auto& item = p.items[st.pc];
        if (std::holds_alternative<LabelDef>(item)) {
            ++st.pc;
            continue;
        }
        const auto& i = std::get<NativeInstr>(item);
        count_step(st, step_limit);
        switch (i.op) {
            case NativeOp::Mov:
                st.regs[static_cast<std::size_t>(i.operands[0].reg)] = value_of(st, i.operands[1]);
                break;
            case NativeOp::Add:
            case NativeOp::Sub: {
                auto& dst = st.regs[static_cast<std::size_t>(i.operands[0].reg)];
                std::int64_t r = i.op == NativeOp::Add
                                     ? wrap_add(dst, value_of(st, i.operands[1]))
                                     : wrap_sub(dst, value_of(st, i.operands[1]));
                dst = r;
                set_flags(st, r);
                break;
            }
            case NativeOp::Mul: {
                auto& dst = st.regs[static_cast<std::size_t>(i.operands[0].reg)];
                dst = wrap_mul(dst, value_of(st, i.operands[1]));
                break;
            }
            case NativeOp::And: {
                auto& dst = st.regs[static_cast<std::size_t>(i.operands[0].reg)];
                dst &= value_of(st, i.operands[1]);
                break;
            }
            case NativeOp::Cmp:
                set_flags(st, wrap_sub(value_of(st, i.operands[0]), value_of(st, i.operands[1])));
                break;
            case NativeOp::Test:
                set_flags(st, value_of(st, i.operands[0]) & value_of(st, i.operands[1]));
                break;
            case NativeOp::Inc:
            case NativeOp::Dec: {
                auto& dst = st.regs[static_cast<std::size_t>(i.operands[0].reg)];
                dst = wrap_add(dst, i.op == NativeOp::Inc ? 1 : -1);
                set_flags(st, dst);
                break;
            }
            case NativeOp::Load:
                st.regs[static_cast<std::size_t>(i.operands[0].reg)] = mem_at(st, i.operands[1].mem);
                break;
            case NativeOp::Store:
                mem_set(st, i.operands[0].mem, value_of(st, i.operands[1]));
                break;
            case NativeOp::Jmp:
            case NativeOp::Je:
            case NativeOp::Jle:
            case NativeOp::Jg:
            case NativeOp::Jbe:
                if (jump_taken(i.op, st)) {
                    st.pc = jump_target(labels, i.operands[0].label);
                    continue;
                }
                break;
            case NativeOp::Ret:
                st.halted = true;
                continue;
        }
        ++st.pc;
    }
    return st;
}

MachineState exec_vm(const VmProgram& p, const MachineState& input,
                     std::uint64_t step_limit) {
    if (count_instrs(p) == 0) return input; // nothing to run
    MachineState st = input;
    st.pc = 0;
    st.steps = 0;
    st.halted = false;
    auto labels = label_index(p);
    while (!st.halted) {
        if (st.pc >= p.items.size()) throw ExecError("program ended without vret");
        const auto& item = p.items[st.pc];
        if (!std::holds_alternative<VmInstr>(item)) {
            ++st.pc; // labels and .debug directives cost nothing
            continue;
        }
        const auto& i = std::get<VmInstr>(item);
        if (is_vm_float_op(i.op))
            throw ExecError(std::string("unsupported opcode '") + vm_op_name(i.op) + "'");
        count_step(st, step_limit);
        switch (i.op) {
            case VmOp::Vmov:
            case VmOp::Vload:
            case VmOp::VloadReg:
            case VmOp::Vstore: {
                std::int64_t v = value_of(st, i.operands[1]);
                if (i.operands[0].kind == VmOperand::Kind::Mem)
                    mem_set(st, i.operands[0].mem, v);
                else
                    reg_set(st, i.operands[0], v);
                break;
            }
            case VmOp::Vadd:
            case VmOp::Vsub: {
                std::int64_t a = value_of(st, i.operands[0]);
                std::int64_t b = value_of(st, i.operands[1]);
                std::int64_t r = i.op == VmOp::Vadd ? wrap_add(a, b) : wrap_sub(a, b);
                reg_set(st, i.operands[0], r);
                set_flags(st, r);
                break;
            }
            case VmOp::Vmul:
                reg_set(st, i.operands[0],
                        wrap_mul(value_of(st, i.operands[0]), value_of(st, i.operands[1])));
                break;
            case VmOp::Vand:
                reg_set(st, i.operands[0],
                        value_of(st, i.operands[0]) & value_of(st, i.operands[1]));
                break;
            case VmOp::Vcmp:
                set_flags(st, wrap_sub(value_of(st, i.operands[0]), value_of(st, i.operands[1])));
                break;
            case VmOp::Vtest:
                set_flags(st, value_of(st, i.operands[0]) & value_of(st, i.operands[1]));
                break;
            case VmOp::Vinc:
            case VmOp::Vdec: {
                std::int64_t r = wrap_add(value_of(st, i.operands[0]), i.op == VmOp::Vinc ? 1 : -1);
                reg_set(st, i.operands[0], r);
                set_flags(st, r);
                break;
            }
            case VmOp::Vjmp:
            case VmOp::Vje:
            case VmOp::Vjle:
            case VmOp::Vjg:
            case VmOp::Vjbe: {
                NativeOp n = i.op == VmOp::Vjmp   ? NativeOp::Jmp
                             : i.op == VmOp::Vje  ? NativeOp::Je
                             : i.op == VmOp::Vjle ? NativeOp::Jle
                             : i.op == VmOp::Vjg  ? NativeOp::Jg
                                                  : NativeOp::Jbe;
                if (jump_taken(n, st)) {
                    st.pc = jump_target(labels, i.operands[0].label);
                    continue;
                }
                break;
            }
            case VmOp::Vret:
                st.halted = true;
                continue;
            default:
                throw ExecError("unreachable opcode dispatch");
        }
        ++st.pc;
    }
    return st;
}

} // namespace vmp
