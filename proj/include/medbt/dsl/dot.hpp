#pragma once

#include <map>
#include <optional>
#include <string>

#include "medbt/validate.hpp"

namespace medbt::dsl {

namespace detail {

inline std::string dot_escape(std::string_view s)
{
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

inline std::string glyph(const Node& n)
{
  return std::visit(
    [](const auto& k) -> std::string {
      using T = std::decay_t<decltype(k)>;
      if constexpr (std::is_same_v<T, kind::Root>) return "Φ";
      else if constexpr (std::is_same_v<T, kind::Sequence>) return "→";
      else if constexpr (std::is_same_v<T, kind::Selector>) return "?";
      else if constexpr (std::is_same_v<T, kind::Parallel>) return "⇉ " + std::to_string(k.threshold);
      else if constexpr (std::is_same_v<T, kind::Recovery>) return "Recovery";
      else if constexpr (std::is_same_v<T, kind::Decorator>) {
        if (auto* r = std::get_if<policy::RetryLimit>(&k.policy)) return "retry ≤" + std::to_string(r->max_attempts);
        if (auto* p = std::get_if<policy::PeriodicTimer>(&k.policy)) return "every " + p->period_key;
        return "repeat until " + to_string(std::get<policy::RepeatUntil>(k.policy).condition);
      } else {
        return k.name;
      }
    },
    n.kind);
}

inline std::string_view status_color(Status s)
{
  switch (s) {
    case Status::Success: return "#2ca02c";
    case Status::Failure: return "#d62728";
    case Status::Running: return "#ff7f0e";
  }
  return "black";
}

}  // namespace detail

/// Graphviz digraph of the tree. Composites show their glyph (Φ, →, ?, ⇉);
/// action leaves are blue boxes and query leaves yellow ellipses. When
/// statuses are given, node outlines are colored by Status.
inline std::string export_dot(const BehaviorTree& tree, const std::map<std::string, Status>* statuses = nullptr)
{
  require_valid(tree);
  std::string out = "digraph \"" + detail::dot_escape(tree.metadata.name.empty() ? "bt" : tree.metadata.name) + "\" {\n";
  out += "  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n";
  std::string edges;
  for_each_preorder(tree, [&](const Node& n, std::size_t) {
    std::string label = detail::glyph(n);
    if (!n.label.empty() && label != n.label) label += "\n" + n.label;
    std::string attrs = "label=\"" + detail::dot_escape(label) + "\"";
    if (std::holds_alternative<kind::Action>(n.kind)) {
      attrs += ", shape=box, style=\"filled,rounded\", fillcolor=\"#9ecae1\"";
    } else if (std::holds_alternative<kind::Query>(n.kind)) {
      attrs += ", shape=ellipse, style=filled, fillcolor=\"#ffeda0\"";
    } else if (std::holds_alternative<kind::Root>(n.kind)) {
      attrs += ", shape=circle";
    } else {
      attrs += ", shape=box";
    }
    if (n.approx) attrs += ", fontcolor=\"#555555\"";
    if (statuses != nullptr) {
      if (auto it = statuses->find(n.id); it != statuses->end()) {
        attrs += ", color=\"" + std::string(detail::status_color(it->second)) + "\", penwidth=3";
      }
    }
    out += "  \"" + detail::dot_escape(n.id) + "\" [" + attrs + "];\n";
    for (const auto& c : n.children) {
      edges += "  \"" + detail::dot_escape(n.id) + "\" -> \"" + detail::dot_escape(c) + "\";\n";
    }
  });
  out += edges + "}\n";
  return out;
}

}  // namespace medbt::dsl
