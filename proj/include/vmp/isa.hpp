#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace vmp {

// ============================================================
// Native ISA
//
// Eight registers r0..r7, 256 signed-64 memory cells, two flags
// (ZF, SF).  Arithmetic wraps.  Flags are written by cmp, test,
// add, sub, inc, dec; conditional jumps read them.
// ============================================================

enum class NativeOp {
    Mov, Add, Sub, Mul, And, Cmp, Test, Inc, Dec,
    Load, Store, Jmp, Je, Jle, Jg, Jbe, Ret,
};

struct Operand {
    enum class Kind { Reg, Imm, Mem, Label };
    Kind kind = Kind::Imm;
    int reg = 0;           // Kind::Reg, 0..7
    std::int64_t imm = 0;  // Kind::Imm
    std::int64_t mem = 0;  // Kind::Mem, bounds checked at execution
    std::string label;     // Kind::Label, without the '@'

    bool operator==(const Operand&) const = default;

    static Operand make_reg(int r) { return {Kind::Reg, r, 0, 0, {}}; }
    static Operand make_imm(std::int64_t v) { return {Kind::Imm, 0, v, 0, {}}; }
    static Operand make_mem(std::int64_t i) { return {Kind::Mem, 0, 0, i, {}}; }
    static Operand make_label(std::string n) { return {Kind::Label, 0, 0, 0, std::move(n)}; }
};

struct NativeInstr {
    NativeOp op;
    std::vector<Operand> operands;
    bool operator==(const NativeInstr&) const = default;
};

struct LabelDef {
    std::string name; // without '@' or ':'
    bool operator==(const LabelDef&) const = default;
};

using NativeItem = std::variant<NativeInstr, LabelDef>;

struct NativeProgram {
    std::vector<NativeItem> items;
    bool operator==(const NativeProgram&) const = default;
};

// ============================================================
// VM ISA
//
// Every instruction carries a [VINST-k] marker.  Registers are
// the persistent %vr<k> file plus %vt<k> temporaries; both live
// in an unbounded map at execution time.  The vf* opcodes parse
// but are not executable.
// ============================================================

enum class VmOp {
    Vmov, Vadd, Vsub, Vmul, Vand, Vcmp, Vtest, Vinc, Vdec,
    Vload, VloadReg, Vstore, Vjmp, Vje, Vjle, Vjg, Vjbe, Vret,
    // Float family: structural only, exec rejects.
    Vfmov, Vfload, Vfcopy, Vfsub, Vfand, Vfcomp,
};

struct VmOperand {
    enum class Kind { VReg, VTemp, Imm, Mem, Label };
    Kind kind = Kind::Imm;
    std::uint64_t index = 0; // VReg / VTemp number
    std::int64_t imm = 0;
    std::int64_t mem = 0;
    std::string label;

    bool operator==(const VmOperand&) const = default;

    static VmOperand make_vreg(std::uint64_t i) { return {Kind::VReg, i, 0, 0, {}}; }
    static VmOperand make_vtemp(std::uint64_t i) { return {Kind::VTemp, i, 0, 0, {}}; }
    static VmOperand make_imm(std::int64_t v) { return {Kind::Imm, 0, v, 0, {}}; }
    static VmOperand make_mem(std::int64_t i) { return {Kind::Mem, 0, 0, i, {}}; }
    static VmOperand make_label(std::string n) { return {Kind::Label, 0, 0, 0, std::move(n)}; }
};

struct VmInstr {
    std::uint64_t marker_index = 0; // positive; preserved as written, renumbering is the normalizer's job
    VmOp op;
    std::vector<VmOperand> operands;
    bool operator==(const VmInstr&) const = default;
};

// `.debug <text>` directive line; stripped by the normalizer.
struct DebugDirective {
    std::string text;
    bool operator==(const DebugDirective&) const = default;
};

using VmItem = std::variant<VmInstr, LabelDef, DebugDirective>;

struct VmProgram {
    std::vector<VmItem> items;
    bool operator==(const VmProgram&) const = default;
};

// ============================================================
// Names, parsing, serialization
// ============================================================

const char* native_op_name(NativeOp op);
const char* vm_op_name(VmOp op);
bool is_vm_float_op(VmOp op);
bool is_vm_jump(VmOp op);
bool is_native_jump(NativeOp op);

// Text -> program.  Grammar per line: instruction, `@label:`,
// `.debug ...` (VM only), `;` comment, or blank.  Operand count
// and kinds are checked against the opcode table; `@label`
// operands must resolve to a defined label, and label names must
// be unique.  Throws ParseError.
NativeProgram parse_native(const std::string& text);
VmProgram parse_vm(const std::string& text);

// Program -> canonical text: one item per line, single spaces,
// operands joined by ", ", trailing newline when nonempty.
// parse(serialize(p)) == p for every valid program.
std::string serialize(const NativeProgram& p);
std::string serialize(const VmProgram& p);
std::string serialize(const Operand& op);
std::string serialize(const VmOperand& op);

// Structural validity check used by the parsers; callable on
// hand-built programs too.  Throws on violation.
void validate(const NativeProgram& p);
void validate(const VmProgram& p);

std::size_t count_instrs(const NativeProgram& p);
std::size_t count_instrs(const VmProgram& p);

} // namespace vmp
