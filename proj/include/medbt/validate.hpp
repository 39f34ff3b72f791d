#pragma once

#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "medbt/tree.hpp"

namespace medbt {

struct StructuralViolation {
  std::string node_id;
  std::string rule;
  std::string message;

  friend bool operator==(const StructuralViolation&, const StructuralViolation&) = default;
};

namespace detail {

inline bool is_identifier(std::string_view s)
{
  if (s.empty()) return false;
  auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto tail = [&](char c) { return head(c) || std::isdigit(static_cast<unsigned char>(c)); };
  if (!head(s.front())) return false;
  for (char c : s.substr(1)) {
    if (!tail(c)) return false;
  }
  return true;
}

inline bool is_node_id(std::string_view s)
{
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

inline void check_node_shape(const Node& n, bool is_root, std::vector<StructuralViolation>& out)
{
  auto add = [&](std::string rule, std::string msg) { out.push_back({n.id, std::move(rule), std::move(msg)}); };
  const std::size_t kids = n.children.size();
  std::visit(
    [&](const auto& k) {
      using T = std::decay_t<decltype(k)>;
      if constexpr (std::is_same_v<T, kind::Root>) {
        if (!is_root) add("nested-root", "root node may only appear at the top of the tree");
        if (kids != 1) add("root-arity", "root must have exactly one child");
      } else {
        if (is_root) add("root-kind", "tree root must be a root node");
        if constexpr (std::is_same_v<T, kind::Sequence> || std::is_same_v<T, kind::Selector>) {
          if (kids < 1) add("composite-arity", std::string(kind_name(n.kind)) + " must have at least one child");
        } else if constexpr (std::is_same_v<T, kind::Parallel>) {
          if (kids < 1) add("composite-arity", "parallel must have at least one child");
          if (k.threshold < 1) add("parallel-threshold", "threshold must be at least 1");
          else if (kids >= 1 && k.threshold > kids) add("parallel-threshold", "threshold exceeds child count");
        } else if constexpr (std::is_same_v<T, kind::Decorator>) {
          if (kids != 1) add("decorator-arity", "decorator must have exactly one child");
          if (auto* r = std::get_if<policy::RetryLimit>(&k.policy); r && r->max_attempts < 1) {
            add("retry-limit", "retry limit must be at least 1");
          }
          if (auto* r = std::get_if<policy::RepeatUntil>(&k.policy)) {
            if (r->max_iterations < 1) add("repeat-limit", "repeat-until iteration cap must be at least 1");
            if (r->condition.key.empty()) add("predicate-key", "repeat-until predicate needs a key");
          }
          if (auto* p = std::get_if<policy::PeriodicTimer>(&k.policy); p && p->period_key.empty()) {
            add("timer-key", "periodic timer needs a period key");
          }
        } else if constexpr (std::is_same_v<T, kind::Recovery>) {
          if (kids != 2) add("recovery-arity", "recovery must have exactly two children (main, recovery)");
        } else {
          if (kids != 0) add("leaf-arity", "leaf must have no children");
          if (k.name.empty()) add("leaf-name", "leaf name must be nonempty");
          else if (!is_identifier(k.name)) add("leaf-name", "leaf name '" + k.name + "' is not an identifier");
        }
      }
    },
    n.kind);
}

}  // namespace detail

/// Returns every structural rule the candidate tree breaks; empty iff valid.
inline std::vector<StructuralViolation> validate(const BehaviorTree& tree)
{
  std::vector<StructuralViolation> out;
  const Node* root = tree.find(tree.root_id);
  if (root == nullptr) {
    out.push_back({tree.root_id, "root-missing", "root id does not resolve to a node"});
    return out;
  }

  std::map<std::string, std::size_t, std::less<>> parents;
  for (const auto& [key, n] : tree.nodes) {
    if (key != n.id) out.push_back({key, "id-mismatch", "node stored under '" + key + "' has id '" + n.id + "'"});
    if (!detail::is_node_id(n.id)) out.push_back({key, "node-id", "node id '" + n.id + "' must be letters, digits, '_' or '-'"});
    detail::check_node_shape(n, key == tree.root_id, out);
    for (const auto& c : n.children) {
      if (tree.find(c) == nullptr) {
        out.push_back({n.id, "dangling-child", "child id '" + c + "' does not resolve"});
        continue;
      }
      if (c == tree.root_id) out.push_back({n.id, "root-as-child", "root cannot be a child"});
      if (++parents[c] == 2) out.push_back({c, "multiple-parents", "node has more than one parent"});
    }
  }

  // Reachability and cycles via DFS from the root.
  std::set<std::string, std::less<>> done;
  std::set<std::string, std::less<>> on_path;
  bool cycle_reported = false;
  std::function<void(const Node&)> dfs = [&](const Node& n) {
    on_path.insert(n.id);
    for (const auto& c : n.children) {
      const Node* child = tree.find(c);
      if (child == nullptr) continue;
      if (on_path.count(c) != 0) {
        if (!cycle_reported) out.push_back({c, "cycle", "child relation contains a cycle"});
        cycle_reported = true;
        continue;
      }
      if (done.count(c) == 0) dfs(*child);
    }
    on_path.erase(n.id);
    done.insert(n.id);
  };
  dfs(*root);
  for (const auto& [key, n] : tree.nodes) {
    if (done.count(key) == 0) out.push_back({key, "unreachable", "node is not reachable from the root"});
  }
  return out;
}

inline std::string describe(const std::vector<StructuralViolation>& vs)
{
  std::string s;
  for (const auto& v : vs) {
    if (!s.empty()) s += "; ";
    s += v.node_id + ": " + v.message;
  }
  return s;
}

inline void require_valid(const BehaviorTree& tree)
{
  auto vs = validate(tree);
  if (!vs.empty()) throw TreeError("invalid behavior tree: " + describe(vs));
}

}  // namespace medbt
