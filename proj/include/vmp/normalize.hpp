#pragma once

#include <string>

#include "vmp/isa.hpp"

namespace vmp {

// The normalization operator.  Four steps, applied in order:
//   1. drop `.debug` directives (comments are lexical and never
//      reach the structural form);
//   2. canonical whitespace -- realized by the serializer;
//   3. rename every label symbol to @sym<k>, k assigned by first
//      occurrence in program order (defs and operands both count);
//      the renaming is a bijection, so semantics are preserved;
//   4. renumber markers to a consecutive [VINST-1..N].
// Idempotent: normalize(normalize(p)) == normalize(p).
VmProgram normalize(const VmProgram& p);

// serialize(normalize(parse_vm(raw))).  Empty input stays empty.
std::string normalize_text(const std::string& raw);

} // namespace vmp
