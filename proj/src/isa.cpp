#include "vmp/isa.hpp"

#include <cctype>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "vmp/error.hpp"

namespace vmp {

namespace {

// Operand-kind bitmask for the arity tables.
enum : unsigned {
    K_REG = 1u << 0,
    K_IMM = 1u << 1,
    K_MEM = 1u << 2,
    K_LBL = 1u << 3,
    K_VRG = 1u << 4,
    K_VTP = 1u << 5,
};

struct NativeOpInfo {
    NativeOp op;
    const char* name;
    std::vector<unsigned> slots;
};

const std::vector<NativeOpInfo>& native_table() {
    static const std::vector<NativeOpInfo> t = {
        {NativeOp::Mov, "mov", {K_REG, K_REG | K_IMM}},
        {NativeOp::Add, "add", {K_REG, K_REG | K_IMM}},
        {NativeOp::Sub, "sub", {K_REG, K_REG | K_IMM}},
        {NativeOp::Mul, "mul", {K_REG, K_REG | K_IMM}},
        {NativeOp::And, "and", {K_REG, K_REG | K_IMM}},
        {NativeOp::Cmp, "cmp", {K_REG, K_REG | K_IMM}},
        {NativeOp::Test, "test", {K_REG, K_REG | K_IMM}},
        {NativeOp::Inc, "inc", {K_REG}},
        {NativeOp::Dec, "dec", {K_REG}},
        {NativeOp::Load, "load", {K_REG, K_MEM}},
        {NativeOp::Store, "store", {K_MEM, K_REG | K_IMM}},
        {NativeOp::Jmp, "jmp", {K_LBL}},
        {NativeOp::Je, "je", {K_LBL}},
        {NativeOp::Jle, "jle", {K_LBL}},
        {NativeOp::Jg, "jg", {K_LBL}},
        {NativeOp::Jbe, "jbe", {K_LBL}},
        {NativeOp::Ret, "ret", {}},
    };
    return t;
}

struct VmOpInfo {
    VmOp op;
    const char* name;
    std::vector<unsigned> slots;
    bool flexible = false; // vf*: operand count/kinds unchecked
};

const std::vector<VmOpInfo>& vm_table() {
    static const unsigned DST = K_VRG | K_VTP;
    static const unsigned SRC = K_VRG | K_VTP | K_IMM;
    static const std::vector<VmOpInfo> t = {
        {VmOp::Vmov, "vmov", {DST, SRC}},
        {VmOp::Vadd, "vadd", {DST, SRC}},
        {VmOp::Vsub, "vsub", {DST, SRC}},
        {VmOp::Vmul, "vmul", {DST, SRC}},
        {VmOp::Vand, "vand", {DST, SRC}},
        {VmOp::Vcmp, "vcmp", {DST, SRC}},
        {VmOp::Vtest, "vtest", {DST, SRC}},
        {VmOp::Vinc, "vinc", {DST}},
        {VmOp::Vdec, "vdec", {DST}},
        {VmOp::Vload, "vload", {DST, SRC | K_MEM}},
        {VmOp::VloadReg, "vload_reg", {DST, SRC | K_MEM}},
        {VmOp::Vstore, "vstore", {DST | K_MEM, SRC}},
        {VmOp::Vjmp, "vjmp", {K_LBL}},
        {VmOp::Vje, "vje", {K_LBL}},
        {VmOp::Vjle, "vjle", {K_LBL}},
        {VmOp::Vjg, "vjg", {K_LBL}},
        {VmOp::Vjbe, "vjbe", {K_LBL}},
        {VmOp::Vret, "vret", {}},
        {VmOp::Vfmov, "vfmov", {}, true},
        {VmOp::Vfload, "vfload", {}, true},
        {VmOp::Vfcopy, "vfcopy", {}, true},
        {VmOp::Vfsub, "vfsub", {}, true},
        {VmOp::Vfand, "vfand", {}, true},
        {VmOp::Vfcomp, "vfcomp", {}, true},
    };
    return t;
}

const NativeOpInfo* find_native(const std::string& name) {
    for (const auto& i : native_table())
        if (name == i.name) return &i;
    return nullptr;
}

const NativeOpInfo& info_of(NativeOp op) {
    for (const auto& i : native_table())
        if (i.op == op) return i;
    throw Error("unknown native opcode enum value");
}

const VmOpInfo* find_vm(const std::string& name) {
    for (const auto& i : vm_table())
        if (name == i.name) return &i;
    return nullptr;
}

const VmOpInfo& info_of(VmOp op) {
    for (const auto& i : vm_table())
        if (i.op == op) return i;
    throw Error("unknown vm opcode enum value");
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
    throw ParseError("line " + std::to_string(line) + ": " + msg);
}

bool valid_ident(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
    if (i == s.size()) return std::nullopt;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno == ERANGE || *end != '\0') return std::nullopt;
    return static_cast<std::int64_t>(v);
}

unsigned kind_bit(Operand::Kind k) {
    switch (k) {
        case Operand::Kind::Reg: return K_REG;
        case Operand::Kind::Imm: return K_IMM;
        case Operand::Kind::Mem: return K_MEM;
        case Operand::Kind::Label: return K_LBL;
    }
    return 0;
}

unsigned kind_bit(VmOperand::Kind k) {
    switch (k) {
        case VmOperand::Kind::VReg: return K_VRG;
        case VmOperand::Kind::VTemp: return K_VTP;
        case VmOperand::Kind::Imm: return K_IMM;
        case VmOperand::Kind::Mem: return K_MEM;
        case VmOperand::Kind::Label: return K_LBL;
    }
    return 0;
}

// Splits "a, b" on top-level commas; pieces are trimmed.
std::vector<std::string> split_operands(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

Operand parse_native_operand(const std::string& tok, std::size_t line) {
    if (tok.empty()) fail(line, "empty operand");
    if (tok[0] == 'r' && tok.size() >= 2) {
        auto n = parse_int(tok.substr(1));
        if (n) {
            if (*n < 0 || *n > 7) fail(line, "register out of range: " + tok);
            return Operand::make_reg(static_cast<int>(*n));
        }
    }
    if (tok[0] == '[') {
        if (tok.back() != ']') fail(line, "unterminated memory operand: " + tok);
        auto n = parse_int(trim(tok.substr(1, tok.size() - 2)));
        if (!n || *n < 0) fail(line, "bad memory index: " + tok);
        return Operand::make_mem(*n);
    }
    if (tok[0] == '@') {
        std::string name = tok.substr(1);
        if (!valid_ident(name)) fail(line, "bad label reference: " + tok);
        return Operand::make_label(name);
    }
    if (auto n = parse_int(tok)) return Operand::make_imm(*n);
    fail(line, "unrecognized operand: " + tok);
}

VmOperand parse_vm_operand(const std::string& tok, std::size_t line) {
    if (tok.empty()) fail(line, "empty operand");
    if (tok.rfind("%vr", 0) == 0) {
        auto n = parse_int(tok.substr(3));
        if (!n || *n < 0) fail(line, "bad virtual register: " + tok);
        return VmOperand::make_vreg(static_cast<std::uint64_t>(*n));
    }
    if (tok.rfind("%vt", 0) == 0) {
        auto n = parse_int(tok.substr(3));
        if (!n || *n < 0) fail(line, "bad temporary register: " + tok);
        return VmOperand::make_vtemp(static_cast<std::uint64_t>(*n));
    }
    if (tok[0] == '%') fail(line, "unrecognized register class: " + tok);
    if (tok[0] == '[') {
        if (tok.back() != ']') fail(line, "unterminated memory operand: " + tok);
        auto n = parse_int(trim(tok.substr(1, tok.size() - 2)));
        if (!n || *n < 0) fail(line, "bad memory index: " + tok);
        return VmOperand::make_mem(*n);
    }
    if (tok[0] == '@') {
        std::string name = tok.substr(1);
        if (!valid_ident(name)) fail(line, "bad label reference: " + tok);
        return VmOperand::make_label(name);
    }
    if (auto n = parse_int(tok)) return VmOperand::make_imm(*n);
    fail(line, "unrecognized operand: " + tok);
}

// Strip `;` comment, trim; returns empty for blank/comment lines.
std::string strip_line(const std::string& raw) {
    std::string s = raw;
    if (auto p = s.find(';'); p != std::string::npos) s = s.substr(0, p);
    return trim(s);
}

std::optional<std::string> match_label_def(const std::string& s, std::size_t line) {
    if (s.empty() || s[0] != '@') return std::nullopt;
    if (s.back() != ':') fail(line, "label definition must end with ':': " + s);
    std::string name = s.substr(1, s.size() - 2);
    if (!valid_ident(name)) fail(line, "bad label name: " + s);
    return name;
}

void check_slots(const std::string& opname, const std::vector<unsigned>& slots,
                 const std::vector<unsigned>& got, std::size_t line) {
    if (got.size() != slots.size())
        fail(line, "'" + opname + "' expects " + std::to_string(slots.size()) +
                       " operand(s), got " + std::to_string(got.size()));
    for (std::size_t i = 0; i < slots.size(); ++i)
        if (!(slots[i] & got[i]))
            fail(line, "operand " + std::to_string(i + 1) + " of '" + opname +
                           "' has the wrong kind");
}

} // namespace

const char* native_op_name(NativeOp op) { return info_of(op).name; }
const char* vm_op_name(VmOp op) { return info_of(op).name; }

bool is_vm_float_op(VmOp op) { return info_of(op).flexible; }

bool is_vm_jump(VmOp op) {
    return op == VmOp::Vjmp || op == VmOp::Vje || op == VmOp::Vjle ||
           op == VmOp::Vjg || op == VmOp::Vjbe;
}

bool is_native_jump(NativeOp op) {
    return op == NativeOp::Jmp || op == NativeOp::Je || op == NativeOp::Jle ||
           op == NativeOp::Jg || op == NativeOp::Jbe;
}

NativeProgram parse_native(const std::string& text) {
    NativeProgram p;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = strip_line(raw);
        if (s.empty()) continue;
        if (auto name = match_label_def(s, line)) {
            p.items.emplace_back(LabelDef{*name});
            continue;
        }
        if (s.rfind(".debug", 0) == 0)
            fail(line, "'.debug' directives are only valid in VM programs");
        std::size_t sp = s.find_first_of(" \t");
        std::string opname = (sp == std::string::npos) ? s : s.substr(0, sp);
        std::string rest = (sp == std::string::npos) ? "" : trim(s.substr(sp));
        const NativeOpInfo* info = find_native(opname);
        if (!info) fail(line, "unknown opcode: " + opname);
        NativeInstr instr{info->op, {}};
        std::vector<unsigned> got;
        for (const auto& tok : split_operands(rest)) {
            if (tok.empty()) fail(line, "empty operand");
            Operand op = parse_native_operand(tok, line);
            got.push_back(kind_bit(op.kind));
            instr.operands.push_back(std::move(op));
        }
        check_slots(opname, info->slots, got, line);
        p.items.emplace_back(std::move(instr));
    }
    validate(p);
    return p;
}

VmProgram parse_vm(const std::string& text) {
    VmProgram p;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = strip_line(raw);
        if (s.empty()) continue;
        if (auto name = match_label_def(s, line)) {
            p.items.emplace_back(LabelDef{*name});
            continue;
        }
        if (s.rfind(".debug", 0) == 0) {
            p.items.emplace_back(DebugDirective{trim(s.substr(6))});
            continue;
        }
        if (s.rfind("[VINST-", 0) != 0)
            fail(line, "VM instruction must start with a [VINST-<n>] marker");
        std::size_t close = s.find(']');
        if (close == std::string::npos) fail(line, "unterminated marker token");
        auto idx = parse_int(s.substr(7, close - 7));
        if (!idx || *idx <= 0) fail(line, "marker index must be a positive integer");
        std::string body = trim(s.substr(close + 1));
        if (body.empty()) fail(line, "marker without an instruction");
        std::size_t sp = body.find_first_of(" \t");
        std::string opname = (sp == std::string::npos) ? body : body.substr(0, sp);
        std::string rest = (sp == std::string::npos) ? "" : trim(body.substr(sp));
        const VmOpInfo* info = find_vm(opname);
        if (!info) fail(line, "unknown v-opcode: " + opname);
        VmInstr instr{static_cast<std::uint64_t>(*idx), info->op, {}};
        std::vector<unsigned> got;
        for (const auto& tok : split_operands(rest)) {
            if (tok.empty()) fail(line, "empty operand");
            VmOperand op = parse_vm_operand(tok, line);
            got.push_back(kind_bit(op.kind));
            instr.operands.push_back(std::move(op));
        }
        if (!info->flexible) check_slots(opname, info->slots, got, line);
        p.items.emplace_back(std::move(instr));
    }
    validate(p);
    return p;
}

void validate(const NativeProgram& p) {
    std::set<std::string> defs;
    for (const auto& item : p.items)
        if (const auto* l = std::get_if<LabelDef>(&item)) {
            if (!defs.insert(l->name).second)
                throw ParseError("duplicate label: @" + l->name);
        }
    for (const auto& item : p.items)
        if (const auto* i = std::get_if<NativeInstr>(&item))
            for (const auto& op : i->operands)
                if (op.kind == Operand::Kind::Label && !defs.count(op.label))
                    throw ParseError("undefined label: @" + op.label);
}

void validate(const VmProgram& p) {
    std::set<std::string> defs;
    for (const auto& item : p.items)
        if (const auto* l = std::get_if<LabelDef>(&item)) {
            if (!defs.insert(l->name).second)
                throw ParseError("duplicate label: @" + l->name);
        }
    for (const auto& item : p.items)
        if (const auto* i = std::get_if<VmInstr>(&item))
            for (const auto& op : i->operands)
                if (op.kind == VmOperand::Kind::Label && !defs.count(op.label))
                    throw ParseError("undefined label: @" + op.label);
}

std::string serialize(const Operand& op) {
    switch (op.kind) {
        case Operand::Kind::Reg: return "r" + std::to_string(op.reg);
        case Operand::Kind::Imm: return std::to_string(op.imm);
        case Operand::Kind::Mem: return "[" + std::to_string(op.mem) + "]";
        case Operand::Kind::Label: return "@" + op.label;
    }
    return "";
}

std::string serialize(const VmOperand& op) {
    switch (op.kind) {
        case VmOperand::Kind::VReg: return "%vr" + std::to_string(op.index);
        case VmOperand::Kind::VTemp: return "%vt" + std::to_string(op.index);
        case VmOperand::Kind::Imm: return std::to_string(op.imm);
        case VmOperand::Kind::Mem: return "[" + std::to_string(op.mem) + "]";
        case VmOperand::Kind::Label: return "@" + op.label;
    }
    return "";
}

namespace {

template <typename Op>
std::string join_operands(const std::vector<Op>& ops) {
    std::string out;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (i) out += ", ";
        out += serialize(ops[i]);
    }
    return out;
}

} // namespace

std::string serialize(const NativeProgram& p) {
    std::string out;
    for (const auto& item : p.items) {
        if (const auto* l = std::get_if<LabelDef>(&item)) {
            out += "@" + l->name + ":";
        } else {
            const auto& i = std::get<NativeInstr>(item);
            out += native_op_name(i.op);
            if (!i.operands.empty()) out += " " + join_operands(i.operands);
        }
        out += "\n";
    }
    return out;
}

std::string serialize(const VmProgram& p) {
    std::string out;
    for (const auto& item : p.items) {
        if (const auto* l = std::get_if<LabelDef>(&item)) {
            out += "@" + l->name + ":";
        } else if (const auto* d = std::get_if<DebugDirective>(&item)) {
            out += ".debug";
            if (!d->text.empty()) out += " " + d->text;
        } else {
            const auto& i = std::get<VmInstr>(item);
            out += "[VINST-" + std::to_string(i.marker_index) + "] ";
            out += vm_op_name(i.op);
            if (!i.operands.empty()) out += " " + join_operands(i.operands);
        }
        out += "\n";
    }
    return out;
}

std::size_t count_instrs(const NativeProgram& p) {
    std::size_t n = 0;
    for (const auto& item : p.items)
        if (std::holds_alternative<NativeInstr>(item)) ++n;
    return n;
}

std::size_t count_instrs(const VmProgram& p) {
    std::size_t n = 0;
    for (const auto& item : p.items)
        if (std::holds_alternative<VmInstr>(item)) ++n;
    return n;
}

} // namespace vmp
