#pragma once

#include "medbt/validate.hpp"

namespace medbt {

namespace detail {

inline bool splices_into(const NodeKind& parent, const NodeKind& child)
{
  return (std::holds_alternative<kind::Sequence>(parent) && std::holds_alternative<kind::Sequence>(child)) ||
         (std::holds_alternative<kind::Selector>(parent) && std::holds_alternative<kind::Selector>(child));
}

}  // namespace detail

/// Splices every Sequence child of a Sequence (and Selector child of a
/// Selector) into its parent's child list, in order. The spliced node's
/// label and comments are dropped; surviving nodes keep their ids.
inline BehaviorTree normalize(const BehaviorTree& tree)
{
  require_valid(tree);
  BehaviorTree out;
  out.metadata = tree.metadata;
  out.root_id = tree.root_id;

  std::function<void(const Node&)> visit = [&](const Node& n) {
    Node copy = n;
    copy.children.clear();
    std::function<void(const Node&)> absorb = [&](const Node& child) {
      if (detail::splices_into(n.kind, child.kind)) {
        for (const auto& g : child.children) absorb(tree.at(g));
      } else {
        copy.children.push_back(child.id);
        visit(child);
      }
    };
    for (const auto& c : n.children) absorb(tree.at(c));
    out.add(std::move(copy));
  };
  visit(tree.root());
  return out;
}

/// True when no Sequence sits directly under a Sequence and no Selector
/// directly under a Selector.
inline bool is_normalized(const BehaviorTree& tree)
{
  bool ok = true;
  for_each_preorder(tree, [&](const Node& n, std::size_t) {
    for (const auto& c : n.children) {
      if (detail::splices_into(n.kind, tree.at(c).kind)) ok = false;
    }
  });
  return ok;
}

}  // namespace medbt
