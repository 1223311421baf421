#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "vmp/isa.hpp"

namespace vmp {

inline constexpr std::uint64_t kDefaultStepLimit = 100000;

// Shared state for both interpreters.  The native register file
// doubles as the %vr0..%vr7 image during VM execution; any other
// virtual register or temporary lives in `vregs`, keyed by its
// rendered name ("%vr9", "%vt42", ...).  Unwritten entries read
// as zero.
struct MachineState {
    std::array<std::int64_t, 8> regs{};
    std::map<std::string, std::int64_t> vregs;
    std::array<std::int64_t, 256> mem{};
    bool zf = false;
    bool sf = false;
    std::uint64_t pc = 0;
    std::uint64_t steps = 0;
    bool halted = false;

    bool operator==(const MachineState&) const = default;
};

// True when two final states agree on everything a native program
// can observe: the r0..r7 image, memory, and both flags.  pc and
// step counts are execution artifacts and intentionally excluded.
bool states_agree(const MachineState& native_out, const MachineState& vm_out);

// Run to `ret`/`vret`.  Throws ExecError on step-limit overrun,
// falling off the end, out-of-range memory access, or (VM only)
// a vf* opcode.  Markers are inert; label items cost no steps.
MachineState exec_native(const NativeProgram& p, const MachineState& input,
                         std::uint64_t step_limit = kDefaultStepLimit);
MachineState exec_vm(const VmProgram& p, const MachineState& input,
                     std::uint64_t step_limit = kDefaultStepLimit);

} // namespace vmp
