#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "vmp/dataset.hpp"
#include "vmp/error.hpp"
#include "vmp/exec.hpp"
#include "vmp/isa.hpp"
#include "vmp/virtualize.hpp"

using namespace vmp;

TEST_CASE("native parse of a single add") {
    NativeProgram p = parse_native("add r0, r1\n");
    REQUIRE(p.items.size() == 1);
    const auto& in = std::get<NativeInstr>(p.items[0]);
    CHECK(in.op == NativeOp::Add);
    REQUIRE(in.operands.size() == 2);
    CHECK(in.operands[0] == Operand::make_reg(0));
    CHECK(in.operands[1] == Operand::make_reg(1));
}

TEST_CASE("empty text is an empty program") {
    CHECK(parse_native("").items.empty());
    CHECK(parse_vm("").items.empty());
    CHECK(serialize(parse_native("")) == "");
    CHECK(serialize(parse_vm("")) == "");
}

TEST_CASE("native operand forms") {
    NativeProgram p = parse_native("mov r3, -17\nload r2, [255]\nstore [0], r2\njmp @end\n@end:\nret\n");
    const auto& mov = std::get<NativeInstr>(p.items[0]);
    CHECK(mov.operands[1] == Operand::make_imm(-17));
    const auto& load = std::get<NativeInstr>(p.items[1]);
    CHECK(load.operands[1] == Operand::make_mem(255));
    const auto& jmp = std::get<NativeInstr>(p.items[3]);
    CHECK(jmp.operands[0] == Operand::make_label("end"));
    CHECK(std::get<LabelDef>(p.items[4]).name == "end");
}

TEST_CASE("native parse errors") {
    CHECK_THROWS_AS(parse_native("add r0\n"), ParseError);          // arity
    CHECK_THROWS_AS(parse_native("add r0, r1, r2\n"), ParseError);  // arity
    CHECK_THROWS_AS(parse_native("add r8, r0\n"), ParseError);      // register range
    CHECK_THROWS_AS(parse_native("frobnicate r0\n"), ParseError);   // unknown opcode
    CHECK_THROWS_AS(parse_native("mov r0, %vr1\n"), ParseError);    // vm operand in native
    CHECK_THROWS_AS(parse_native("jmp @a\n@a:\n@a:\nret\n"), ParseError); // duplicate label
    CHECK_THROWS_AS(parse_native("jmp @nowhere\nret\n"), ParseError);     // undefined label
    CHECK_THROWS_AS(parse_native(".debug line 3\nret\n"), ParseError);    // vm-only directive
    CHECK_THROWS_AS(parse_native("mov r0, [-1]\n"), ParseError);          // negative index
}

TEST_CASE("parse errors carry line numbers") {
    try {
        parse_native("mov r0, 1\nadd r8, r0\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("vm parse keeps marker indices as written") {
    VmProgram p = parse_vm("[VINST-7] vadd %vt0, %vt1\n");
    const auto& in = std::get<VmInstr>(p.items[0]);
    CHECK(in.marker_index == 7);
    CHECK(in.op == VmOp::Vadd);
    CHECK(in.operands[0] == VmOperand::make_vtemp(0));
    CHECK(in.operands[1] == VmOperand::make_vtemp(1));
}

TEST_CASE("vm label definition before an instruction") {
    VmProgram p = parse_vm("@L_loop:\n[VINST-14] vcmp %vr1, %vr2\n");
    REQUIRE(p.items.size() == 2);
    CHECK(std::get<LabelDef>(p.items[0]).name == "L_loop");
    CHECK(std::get<VmInstr>(p.items[1]).op == VmOp::Vcmp);
}

TEST_CASE("vm parse errors") {
    CHECK_THROWS_AS(parse_vm("[VINST-] vadd %vt0, %vt1\n"), ParseError); // malformed marker
    CHECK_THROWS_AS(parse_vm("vadd %vt0, %vt1\n"), ParseError);          // marker missing
    CHECK_THROWS_AS(parse_vm("[VINST-0] vadd %vt0, %vt1\n"), ParseError); // index must be >= 1
    CHECK_THROWS_AS(parse_vm("[VINST-1] vbogus %vt0\n"), ParseError);
    CHECK_THROWS_AS(parse_vm("[VINST-1] vjmp @gone\n"), ParseError); // dangling label
    CHECK_THROWS_AS(parse_vm("[VINST-1] vadd r0, r1\n"), ParseError); // native operand in vm
}

TEST_CASE("vm debug directives and float opcodes parse") {
    VmProgram p = parse_vm(".debug srcline 12\n[VINST-1] vfmov %vr0, %vr1\n[VINST-2] vret\n");
    CHECK(std::holds_alternative<DebugDirective>(p.items[0]));
    CHECK(std::get<VmInstr>(p.items[1]).op == VmOp::Vfmov);
    CHECK(is_vm_float_op(VmOp::Vfmov));
    CHECK_FALSE(is_vm_float_op(VmOp::Vmov));
}

TEST_CASE("comments are stripped") {
    NativeProgram p = parse_native("; whole-line comment\nmov r0, 1 ; trailing\nret\n");
    CHECK(count_instrs(p) == 2);
    CHECK(serialize(p) == "mov r0, 1\nret\n");
}

TEST_CASE("serialization canonicalizes whitespace") {
    CHECK(serialize(parse_native("  add   r0 ,   r1  \n")) == "add r0, r1\n");
    CHECK(serialize(parse_vm("[VINST-3]   vadd %vt0,%vt1\n")) == "[VINST-3] vadd %vt0, %vt1\n");
}

TEST_CASE("round trip on generated programs") {
    for (std::uint64_t seed = 1; seed <= 24; ++seed) {
        auto gen = gen_program(seed, seed % 2 ? SizeClass::Loop : SizeClass::Straightline);
        std::string text = serialize(gen.native);
        NativeProgram again = parse_native(text);
        CHECK(again == gen.native);
        CHECK(serialize(again) == text);

        VmProgram vmp = virtualize(gen.native, ProtectionLevel(3), PolySeed{seed});
        std::string vm_text = serialize(vmp);
        VmProgram vm_again = parse_vm(vm_text);
        CHECK(vm_again == vmp);
        CHECK(serialize(vm_again) == vm_text);
    }
}

TEST_CASE("count_instrs skips labels and debug directives") {
    CHECK(count_instrs(parse_native("jmp @a\n@a:\nret\n")) == 2);
    CHECK(count_instrs(parse_vm(".debug x\n@a:\n[VINST-1] vjmp @a\n")) == 1);
}

TEST_CASE("exec: mov then ret") {
    MachineState in;
    MachineState out = exec_native(parse_native("mov r0, 5\nret\n"), in);
    CHECK(out.regs[0] == 5);
    CHECK(out.halted);
}

TEST_CASE("exec: jump over a label leaves state unchanged") {
    MachineState in;
    in.regs[3] = 42;
    MachineState out = exec_native(parse_native("jmp @a\n@a:\nret\n"), in);
    CHECK(states_agree(out, in));
}

TEST_CASE("exec: empty program returns the input unchanged") {
    MachineState in;
    in.regs[1] = 9;
    in.mem[3] = -4;
    CHECK(exec_native(NativeProgram{}, in) == in);
    CHECK(exec_vm(VmProgram{}, in) == in);
    CHECK(exec_vm(parse_vm(".debug only\n"), in) == in);
}

TEST_CASE("exec: infinite loop hits the step limit") {
    NativeProgram p = parse_native("@spin:\njmp @spin\nret\n");
    MachineState in;
    CHECK_THROWS_WITH_AS(exec_native(p, in, 1000), "step limit exceeded (1000)", ExecError);
}

TEST_CASE("exec: falling off a nonempty program is an error") {
    MachineState in;
    CHECK_THROWS_AS(exec_native(parse_native("mov r0, 1\n"), in), ExecError);
    CHECK_THROWS_AS(exec_vm(parse_vm("[VINST-1] vmov %vr0, 1\n"), in), ExecError);
}

TEST_CASE("exec: memory bounds") {
    MachineState in;
    CHECK_THROWS_AS(exec_vm(parse_vm("[VINST-1] vstore [999], %vr0\n[VINST-2] vret\n"), in),
                    ExecError);
    CHECK_THROWS_AS(exec_native(parse_native("load r0, [256]\nret\n"), in), ExecError);
}

TEST_CASE("exec: float opcodes are rejected at run time") {
    MachineState in;
    try {
        exec_vm(parse_vm("[VINST-1] vfmov %vr0, %vr1\n[VINST-2] vret\n"), in);
        FAIL("expected unsupported-opcode error");
    } catch (const ExecError& e) {
        CHECK(std::string(e.what()).find("unsupported opcode") != std::string::npos);
    }
}

TEST_CASE("exec: flags") {
    MachineState in;
    in.regs[0] = 3;
    in.regs[1] = 3;
    MachineState out = exec_native(parse_native("cmp r0, r1\nret\n"), in);
    CHECK(out.zf);
    CHECK_FALSE(out.sf);
    in.regs[1] = 5;
    out = exec_native(parse_native("cmp r0, r1\nret\n"), in);
    CHECK_FALSE(out.zf);
    CHECK(out.sf);
    out = exec_native(parse_native("and r0, r1\nret\n"), in); // and does not set flags
    CHECK_FALSE(out.zf);
    CHECK_FALSE(out.sf);
}

TEST_CASE("exec: conditional jumps") {
    // jle taken on equal, jg taken on strictly greater
    const char* text =
        "cmp r0, r1\n"
        "jle @le\n"
        "mov r2, 1\n"
        "ret\n"
        "@le:\n"
        "mov r2, 2\n"
        "ret\n";
    MachineState in;
    in.regs[0] = 4;
    in.regs[1] = 4;
    CHECK(exec_native(parse_native(text), in).regs[2] == 2);
    in.regs[0] = 9;
    CHECK(exec_native(parse_native(text), in).regs[2] == 1);
}

TEST_CASE("exec: signed wrapping arithmetic") {
    MachineState in;
    in.regs[0] = INT64_MAX;
    MachineState out = exec_native(parse_native("inc r0\nret\n"), in);
    CHECK(out.regs[0] == INT64_MIN);
    CHECK(out.sf);
    in.regs[0] = INT64_MIN;
    out = exec_native(parse_native("dec r0\nret\n"), in);
    CHECK(out.regs[0] == INT64_MAX);
}

TEST_CASE("exec: virtual registers beyond r7 live in the map") {
    VmProgram p = parse_vm(
        "[VINST-1] vmov %vr12, 7\n"
        "[VINST-2] vmov %vt3, %vr12\n"
        "[VINST-3] vadd %vt3, %vr12\n"
        "[VINST-4] vstore %vr0, %vt3\n"
        "[VINST-5] vret\n");
    MachineState in;
    MachineState out = exec_vm(p, in);
    CHECK(out.regs[0] == 14);
    CHECK(out.vregs.at("%vr12") == 7);
    CHECK(out.vregs.at("%vt3") == 14);
}

TEST_CASE("exec: unwritten virtual registers read as zero") {
    MachineState in;
    MachineState out = exec_vm(parse_vm("[VINST-1] vmov %vr0, %vt99\n[VINST-2] vret\n"), in);
    CHECK(out.regs[0] == 0);
}

TEST_CASE("markers are semantically inert") {
    auto gen = gen_program(99, SizeClass::Loop);
    VmProgram p = virtualize(gen.native, ProtectionLevel(2), PolySeed{5});
    VmProgram stripped = p;
    for (auto& item : stripped.items)
        if (auto* in = std::get_if<VmInstr>(&item)) in->marker_index = 1;
    MachineState in;
    in.regs[0] = 11;
    in.regs[1] = -2;
    in.regs[2] = 3;
    CHECK(exec_vm(p, in) == exec_vm(stripped, in));
}

TEST_CASE("exec is deterministic") {
    auto gen = gen_program(5, SizeClass::Straightline);
    MachineState in;
    in.regs[0] = 1;
    in.regs[1] = 2;
    in.regs[2] = 3;
    CHECK(exec_native(gen.native, in) == exec_native(gen.native, in));
}

TEST_CASE("states_agree ignores pc and step counters") {
    MachineState a, b;
    a.pc = 5;
    a.steps = 100;
    b.pc = 9;
    b.steps = 3;
    CHECK(states_agree(a, b));
    b.mem[0] = 1;
    CHECK_FALSE(states_agree(a, b));
}
