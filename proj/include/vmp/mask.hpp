#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmp/isa.hpp"

namespace vmp {

// One token of a VM function.  Regular tokens carry the 1-based
// instruction index t and within-instruction index k; the marker
// token of instruction t sits at the end of that instruction's
// token run.  Label definitions attach as leading tokens of the
// following instruction; a trailing label with no instruction
// after it is dropped.
struct Token {
    std::string text;
    bool is_marker = false;
    int instr = 0;  // t, 1-based
    int within = 0; // k, 1-based for regular tokens; 0 for markers
    bool operator==(const Token&) const = default;
};

struct TokenizedFunction {
    std::vector<Token> tokens;
    int instr_count = 0;               // T
    std::vector<int> tokens_per_instr; // m_t, regular tokens only
};

TokenizedFunction tokenize_vm(const VmProgram& p);

// Whitespace-and-punctuation split of pseudo-C source.
std::vector<std::string> tokenize_source(const std::string& text);

// Boolean visibility matrix: at(u, v) == true means position u
// may attend to position v.
struct AttnMask {
    enum class Variant { Causal, Decoder, EncoderLiteral };
    std::size_t n = 0;
    std::vector<std::uint8_t> bits;

    bool at(std::size_t u, std::size_t v) const { return bits[u * n + v] != 0; }
    void set(std::size_t u, std::size_t v, bool b) { bits[u * n + v] = b ? 1 : 0; }
};

// Plain lower-triangular causal mask over the token stream.
AttnMask build_causal_mask(const TokenizedFunction& f);

// Hierarchical mask.  Decoder variant:
//   regular x_t^k sees x_t^1..x_t^k and markers 1..t-1;
//   marker t sees instruction t's tokens, itself, and markers 1..t-1.
// EncoderLiteral additionally lets x_t^k see its own marker t,
// which sits at a later position.
AttnMask build_hier_mask(const TokenizedFunction& f, AttnMask::Variant variant);

// Positions reachable through visibility chains of length <= hops;
// hops == 1 returns the mask itself.
AttnMask reachability(const AttnMask& mask, int hops);

struct ExpressivityViolation {
    int from_instr = 0; // t + k
    int to_instr = 0;   // t
    std::size_t from_pos = 0;
    std::size_t to_pos = 0;
};

// Verifies the two-hop property behind the hierarchical mask: for
// every pair of instructions (t, t+k) with k > 1, each token of
// t+k sees marker t, and marker t sees each token of t.  Functions
// with fewer than three instructions make the property vacuous.
struct ExpressivityReport {
    bool vacuous = false;
    std::uint64_t checked_pairs = 0;
    std::vector<ExpressivityViolation> violations;
    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

ExpressivityReport expressivity_check(const TokenizedFunction& f);
ExpressivityReport expressivity_check(const TokenizedFunction& f, const AttnMask& mask);

// Dense 0/1 grid, one row per line, space-separated.
std::string mask_to_text(const AttnMask& mask);

} // namespace vmp
