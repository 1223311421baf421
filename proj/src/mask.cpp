#include "vmp/mask.hpp"

#include <cctype>
#include <variant>

#include "vmp/error.hpp"

namespace vmp {

TokenizedFunction tokenize_vm(const VmProgram& p) {
    TokenizedFunction f;
    std::vector<std::string> pending_labels;
    for (const auto& item : p.items) {
        if (const auto* l = std::get_if<LabelDef>(&item)) {
            pending_labels.push_back("@" + l->name + ":");
            continue;
        }
        const auto* i = std::get_if<VmInstr>(&item);
        if (!i) continue; // .debug carries no mask-relevant tokens
        ++f.instr_count;
        int t = f.instr_count;
        int k = 0;
        auto regular = [&](std::string text) {
            f.tokens.push_back({std::move(text), false, t, ++k});
        };
        for (auto& lbl : pending_labels) regular(std::move(lbl));
        pending_labels.clear();
        regular(vm_op_name(i->op));
        for (const auto& op : i->operands) regular(serialize(op));
        f.tokens.push_back({"[VINST-" + std::to_string(i->marker_index) + "]", true, t, 0});
        f.tokens_per_instr.push_back(k);
    }
    return f;
}

std::vector<std::string> tokenize_source(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += c;
        } else {
            flush();
            out.push_back(std::string(1, c));
        }
    }
    flush();
    return out;
}

namespace {

AttnMask blank(std::size_t n) {
    AttnMask m;
    m.n = n;
    m.bits.assign(n * n, 0);
    return m;
}

// Position of each marker, indexed by instruction (1-based).
std::vector<std::size_t> marker_positions(const TokenizedFunction& f) {
    std::vector<std::size_t> pos(static_cast<std::size_t>(f.instr_count) + 1, 0);
    for (std::size_t i = 0; i < f.tokens.size(); ++i)
        if (f.tokens[i].is_marker) pos[static_cast<std::size_t>(f.tokens[i].instr)] = i;
    return pos;
}

} // namespace

AttnMask build_causal_mask(const TokenizedFunction& f) {
    AttnMask m = blank(f.tokens.size());
    for (std::size_t u = 0; u < m.n; ++u)
        for (std::size_t v = 0; v <= u; ++v) m.set(u, v, true);
    return m;
}

AttnMask build_hier_mask(const TokenizedFunction& f, AttnMask::Variant variant) {
    if (variant == AttnMask::Variant::Causal) return build_causal_mask(f);
    AttnMask m = blank(f.tokens.size());
    auto mpos = marker_positions(f);
    for (std::size_t u = 0; u < f.tokens.size(); ++u) {
        const Token& tu = f.tokens[u];
        // Markers of every earlier instruction.
        for (int s = 1; s < tu.instr; ++s) m.set(u, mpos[static_cast<std::size_t>(s)], true);
        if (tu.is_marker) {
            // Whole own instruction, self included.
            for (std::size_t v = 0; v < f.tokens.size(); ++v)
                if (f.tokens[v].instr == tu.instr) m.set(u, v, true);
        } else {
            // Own instruction up to and including this token.
            for (std::size_t v = 0; v <= u; ++v)
                if (!f.tokens[v].is_marker && f.tokens[v].instr == tu.instr) m.set(u, v, true);
            if (variant == AttnMask::Variant::EncoderLiteral)
                m.set(u, mpos[static_cast<std::size_t>(tu.instr)], true);
        }
    }
    return m;
}

AttnMask reachability(const AttnMask& mask, int hops) {
    if (hops < 1) throw Error("reachability requires hops >= 1");
    AttnMask r = mask;
    for (int h = 1; h < hops; ++h) {
        AttnMask next = mask;
        for (std::size_t u = 0; u < mask.n; ++u)
            for (std::size_t w = 0; w < mask.n; ++w)
                if (mask.at(u, w))
                    for (std::size_t v = 0; v < mask.n; ++v)
                        if (r.at(w, v)) next.set(u, v, true);
        r = std::move(next);
    }
    return r;
}

std::string ExpressivityReport::to_string() const {
    if (vacuous) return "expressivity: vacuous (fewer than 3 instructions)";
    std::string s = "expressivity: " + std::to_string(checked_pairs) + " pair(s) checked, " +
                    std::to_string(violations.size()) + " violation(s)";
    for (const auto& v : violations)
        s += "\n  token at position " + std::to_string(v.from_pos) + " (instr " +
             std::to_string(v.from_instr) + ") <-> marker of instr " +
             std::to_string(v.to_instr) + " at position " + std::to_string(v.to_pos);
    return s;
}

ExpressivityReport expressivity_check(const TokenizedFunction& f) {
    return expressivity_check(f, build_hier_mask(f, AttnMask::Variant::Decoder));
}

ExpressivityReport expressivity_check(const TokenizedFunction& f, const AttnMask& mask) {
    ExpressivityReport rep;
    if (f.instr_count < 3) {
        rep.vacuous = true;
        return rep;
    }
    if (mask.n != f.tokens.size()) throw Error("mask size does not match token count");
    auto mpos = marker_positions(f);
    for (int t = 1; t <= f.instr_count; ++t) {
        for (int k = 2; t + k <= f.instr_count; ++k) {
            ++rep.checked_pairs;
            std::size_t marker_t = mpos[static_cast<std::size_t>(t)];
            for (std::size_t j = 0; j < f.tokens.size(); ++j) {
                const Token& tok = f.tokens[j];
                if (tok.instr == t + k && !tok.is_marker && !mask.at(j, marker_t))
                    rep.violations.push_back({t + k, t, j, marker_t});
                if (tok.instr == t && !tok.is_marker && !mask.at(marker_t, j))
                    rep.violations.push_back({t, t, marker_t, j});
            }
        }
    }
    return rep;
}

std::string mask_to_text(const AttnMask& mask) {
    std::string out;
    for (std::size_t u = 0; u < mask.n; ++u) {
        for (std::size_t v = 0; v < mask.n; ++v) {
            if (v) out += ' ';
            out += mask.at(u, v) ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

} // namespace vmp
