#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace emarig {

// Armature structure as a rooted tree. Nodes are stored in depth-first
// pre-order from the root, children in source order; node 0 is the root.
struct RigGraph {
  std::vector<std::string> nodes;
  std::vector<int> parent;                 // -1 for the root
  std::vector<std::vector<int>> children;

  std::size_t size() const { return nodes.size(); }
  std::optional<int> find(std::string_view name) const;
  std::vector<std::pair<std::string, std::string>> edges() const;  // parent -> child
};

// Parses the digraph subset: `[strict] digraph [id] { ... }` with `a -> b -> c;`
// edge chains, node statements, attribute lists (ignored), `//`, `/* */` and
// `#` comments. Throws Error("rig", ParseError|CycleDetected|MultipleParents|
// MultipleRoots).
RigGraph parse_rig_graph(std::string_view text);

std::string format_rig_graph(const RigGraph& graph);

}  // namespace emarig
