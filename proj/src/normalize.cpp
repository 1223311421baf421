#include "vmp/normalize.hpp"

#include <map>
#include <variant>

namespace vmp {

VmProgram normalize(const VmProgram& p) {
    // Step 1: strip debug directives.
    VmProgram out;
    for (const auto& item : p.items)
        if (!std::holds_alternative<DebugDirective>(item)) out.items.push_back(item);

    // Step 3: first-occurrence symbol renaming.  Built as one map,
    // applied simultaneously, so already-canonical names stay put.
    std::map<std::string, std::string> rename;
    auto visit_name = [&](const std::string& name) {
        if (!rename.count(name))
            rename[name] = "sym" + std::to_string(rename.size());
    };
    for (const auto& item : out.items) {
        if (const auto* l = std::get_if<LabelDef>(&item)) {
            visit_name(l->name);
        } else if (const auto* i = std::get_if<VmInstr>(&item)) {
            for (const auto& op : i->operands)
                if (op.kind == VmOperand::Kind::Label) visit_name(op.label);
        }
    }
    for (auto& item : out.items) {
        if (auto* l = std::get_if<LabelDef>(&item)) {
            l->name = rename.at(l->name);
        } else if (auto* i = std::get_if<VmInstr>(&item)) {
            for (auto& op : i->operands)
                if (op.kind == VmOperand::Kind::Label) op.label = rename.at(op.label);
        }
    }

    // Step 4: consecutive marker numbering.
    std::uint64_t next = 1;
    for (auto& item : out.items)
        if (auto* i = std::get_if<VmInstr>(&item)) i->marker_index = next++;

    return out;
}

std::string normalize_text(const std::string& raw) {
    return serialize(normalize(parse_vm(raw)));
}

} // namespace vmp
