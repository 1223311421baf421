#pragma once

#include <cstdint>
#include <string>

#include "vmp/isa.hpp"

namespace vmp {

// Protection levels. -1 denotes unprotected source in dataset and
// loss contexts; only 0..3 are valid virtualization targets.
//   L0  direct 1:1 translation (rN -> %vrN)
//   L1  register virtualization through %vt temporaries
//   L2  L1 plus instruction splitting via a scratch temporary
//   L3  L2 plus dispatcher-style vjmp @handler_* control flow
struct ProtectionLevel {
    int value = 0;
    explicit ProtectionLevel(int v);
    bool operator==(const ProtectionLevel&) const = default;
};

// Parses "L0".."L3", "0".."3", or "source"/"-1".
ProtectionLevel parse_protection_level(const std::string& s);
std::string protection_level_name(int level); // "source", "L0", ...

enum class OptLevel { O0, O1, O2 };
OptLevel parse_opt_level(const std::string& s);
const char* opt_level_name(OptLevel o);

// Seed for the polymorphic encoder: drives the %vt numbering
// offset and the shuffle of @handler_* label suffixes.  Distinct
// seeds give textually distinct, semantically equal output.
struct PolySeed {
    std::uint64_t seed = 0;
};

// O0 = identity; O1 = constant folding of immediate-only
// arithmetic on registers with known constant values; O2 = O1
// plus dead-register-write elimination.  Flag-writing
// instructions are only folded or removed where no conditional
// jump can read their flags (flags count as dead at ret), so
// registers and memory are always preserved; the flag bits left
// at exit may differ when the last flag write was dead.
NativeProgram optimize(const NativeProgram& p, OptLevel level);

// Per-instruction expansion is fixed per opcode class:
//                L0  L1  L2  L3
//   arith/mov     1   4   6  10
//   cmp/test      1   3   4   7
//   inc/dec       1   3   5   8
//   load/store    1   2   3   5
//   jumps, ret    1   1   1   1
VmProgram virtualize(const NativeProgram& p, ProtectionLevel level, PolySeed seed);

// |VM instructions| / |native instructions|; labels do not count.
// Throws on an empty native program.
double expansion_ratio(const NativeProgram& native, const VmProgram& vm);

} // namespace vmp
