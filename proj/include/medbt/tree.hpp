#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "medbt/predicate.hpp"

namespace medbt {

/// Decorator policies.
namespace policy {

struct RepeatUntil {
  static constexpr std::uint32_t kDefaultMaxIterations = 10'000;
  Predicate condition;
  std::uint32_t max_iterations = kDefaultMaxIterations;
  friend bool operator==(const RepeatUntil&, const RepeatUntil&) = default;
};

struct RetryLimit {
  std::uint32_t max_attempts = 1;
  friend bool operator==(const RetryLimit&, const RetryLimit&) = default;
};

/// Ticks its child every `period_key` seconds (re-read at each scheduling
/// decision) until the child succeeds.
struct PeriodicTimer {
  std::string period_key;
  friend bool operator==(const PeriodicTimer&, const PeriodicTimer&) = default;
};

}  // namespace policy

using DecoratorPolicy = std::variant<policy::RepeatUntil, policy::RetryLimit, policy::PeriodicTimer>;

namespace kind {

struct Root {
  friend bool operator==(const Root&, const Root&) = default;
};
struct Sequence {
  friend bool operator==(const Sequence&, const Sequence&) = default;
};
struct Selector {
  friend bool operator==(const Selector&, const Selector&) = default;
};
/// Succeeds once `threshold` children have succeeded.
struct Parallel {
  std::size_t threshold = 1;
  friend bool operator==(const Parallel&, const Parallel&) = default;
};
struct Decorator {
  DecoratorPolicy policy;
  friend bool operator==(const Decorator&, const Decorator&) = default;
};
/// Two children: main, recovery.
struct Recovery {
  friend bool operator==(const Recovery&, const Recovery&) = default;
};
struct Action {
  std::string name;
  std::vector<Assignment> effects;
  friend bool operator==(const Action&, const Action&) = default;
};
struct Query {
  std::string name;
  /// When set and no explicit binding exists, the query evaluates this
  /// predicate against the blackboard.
  std::optional<Predicate> condition;
  friend bool operator==(const Query&, const Query&) = default;
};

}  // namespace kind

using NodeKind = std::variant<kind::Root, kind::Sequence, kind::Selector, kind::Parallel, kind::Decorator,
                              kind::Recovery, kind::Action, kind::Query>;

/// Leaf names that the engine binds itself.
inline constexpr std::string_view kAlwaysSuccess = "AlwaysSuccess";
inline constexpr std::string_view kAlwaysFailure = "AlwaysFailure";

inline bool is_builtin_leaf(std::string_view name) { return name == kAlwaysSuccess || name == kAlwaysFailure; }

struct Node {
  std::string id;
  NodeKind kind;
  std::string label;
  std::vector<std::string> children;
  /// Transcription is uncertain.
  bool approx = false;
  /// Comment lines that precede this node in DSL source (without indentation).
  std::vector<std::string> comments;

  friend bool operator==(const Node&, const Node&) = default;
};

inline bool is_leaf(const NodeKind& k)
{
  return std::holds_alternative<kind::Action>(k) || std::holds_alternative<kind::Query>(k);
}

inline bool is_leaf(const Node& n) { return is_leaf(n.kind); }

/// Action or Query name; empty for composites.
inline const std::string& leaf_name(const Node& n)
{
  static const std::string empty;
  if (auto* a = std::get_if<kind::Action>(&n.kind)) return a->name;
  if (auto* q = std::get_if<kind::Query>(&n.kind)) return q->name;
  return empty;
}

inline std::string_view kind_name(const NodeKind& k)
{
  return std::visit(
    [](const auto& x) -> std::string_view {
      using T = std::decay_t<decltype(x)>;
      if constexpr (std::is_same_v<T, kind::Root>) return "root";
      else if constexpr (std::is_same_v<T, kind::Sequence>) return "sequence";
      else if constexpr (std::is_same_v<T, kind::Selector>) return "selector";
      else if constexpr (std::is_same_v<T, kind::Parallel>) return "parallel";
      else if constexpr (std::is_same_v<T, kind::Decorator>) {
        return std::visit(
          [](const auto& p) -> std::string_view {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, policy::RepeatUntil>) return "repeat-until";
            else if constexpr (std::is_same_v<P, policy::RetryLimit>) return "retry";
            else return "every";
          },
          x.policy);
      } else if constexpr (std::is_same_v<T, kind::Recovery>) return "recovery";
      else if constexpr (std::is_same_v<T, kind::Action>) return "action";
      else return "query";
    },
    k);
}

struct TreeMetadata {
  std::string name;
  std::string version;
  std::string source;
  std::vector<std::string> header_comments;
  std::vector<std::string> trailing_comments;

  friend bool operator==(const TreeMetadata&, const TreeMetadata&) = default;
};

/// Rooted ordered tree of nodes keyed by id. Candidate trees may violate
/// structural rules; see validate().
struct BehaviorTree {
  std::map<std::string, Node, std::less<>> nodes;
  std::string root_id;
  TreeMetadata metadata;

  const Node* find(std::string_view id) const
  {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
  }

  const Node& at(std::string_view id) const
  {
    if (const Node* n = find(id)) return *n;
    throw TreeError("no node with id '" + std::string(id) + "'");
  }

  Node& at(std::string_view id)
  {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw TreeError("no node with id '" + std::string(id) + "'");
    return it->second;
  }

  const Node& root() const { return at(root_id); }

  /// First child of the root (the protocol's top node).
  const Node& top() const
  {
    const Node& r = root();
    if (r.children.empty()) throw TreeError("root has no child");
    return at(r.children.front());
  }

  void add(Node n)
  {
    std::string id = n.id;
    if (!nodes.emplace(id, std::move(n)).second) throw TreeError("duplicate node id '" + id + "'");
  }

  friend bool operator==(const BehaviorTree&, const BehaviorTree&) = default;
};

/// Preorder visit from the root. Assumes an acyclic tree with resolvable ids.
inline void for_each_preorder(const BehaviorTree& tree,
                              const std::function<void(const Node&, std::size_t depth)>& fn)
{
  std::function<void(const Node&, std::size_t)> walk = [&](const Node& n, std::size_t depth) {
    fn(n, depth);
    for (const auto& c : n.children) walk(tree.at(c), depth + 1);
  };
  walk(tree.root(), 0);
}

inline std::vector<const Node*> preorder(const BehaviorTree& tree)
{
  std::vector<const Node*> out;
  for_each_preorder(tree, [&](const Node& n, std::size_t) { out.push_back(&n); });
  return out;
}

inline std::size_t leaf_count(const BehaviorTree& tree, bool include_builtins = false)
{
  std::size_t n = 0;
  for_each_preorder(tree, [&](const Node& node, std::size_t) {
    if (is_leaf(node) && (include_builtins || !is_builtin_leaf(leaf_name(node)))) ++n;
  });
  return n;
}

/// Same kinds, parameters, labels, approx flags and child order. Ids,
/// comments and metadata are ignored.
inline bool structurally_equal(const BehaviorTree& a, const BehaviorTree& b)
{
  std::function<bool(const Node&, const Node&)> eq = [&](const Node& x, const Node& y) {
    if (!(x.kind == y.kind) || x.label != y.label || x.approx != y.approx) return false;
    if (x.children.size() != y.children.size()) return false;
    for (std::size_t i = 0; i < x.children.size(); ++i) {
      if (!eq(a.at(x.children[i]), b.at(y.children[i]))) return false;
    }
    return true;
  };
  return eq(a.root(), b.root());
}

inline std::string auto_id(std::size_t preorder_index) { return "n" + std::to_string(preorder_index); }

/// Recursive value description of a subtree, convenient for building trees
/// in code: `root(sequence(action("A"), query("B")))`.
struct NodeSpec {
  NodeKind kind;
  std::string label;
  std::string id;
  std::vector<NodeSpec> children;
  bool approx = false;

  NodeSpec&& labeled(std::string l) &&
  {
    label = std::move(l);
    return std::move(*this);
  }
  NodeSpec&& with_id(std::string i) &&
  {
    id = std::move(i);
    return std::move(*this);
  }
};

namespace build {

template <typename... C>
NodeSpec root(C&&... c)
{
  return NodeSpec{kind::Root{}, {}, {}, {std::forward<C>(c)...}};
}
template <typename... C>
NodeSpec sequence(C&&... c)
{
  return NodeSpec{kind::Sequence{}, {}, {}, {std::forward<C>(c)...}};
}
template <typename... C>
NodeSpec selector(C&&... c)
{
  return NodeSpec{kind::Selector{}, {}, {}, {std::forward<C>(c)...}};
}
template <typename... C>
NodeSpec parallel(std::size_t threshold, C&&... c)
{
  return NodeSpec{kind::Parallel{threshold}, {}, {}, {std::forward<C>(c)...}};
}
inline NodeSpec retry(std::uint32_t attempts, NodeSpec child)
{
  return NodeSpec{kind::Decorator{policy::RetryLimit{attempts}}, {}, {}, {std::move(child)}};
}
inline NodeSpec repeat_until(Predicate p, NodeSpec child,
                             std::uint32_t max_iterations = policy::RepeatUntil::kDefaultMaxIterations)
{
  return NodeSpec{kind::Decorator{policy::RepeatUntil{std::move(p), max_iterations}}, {}, {}, {std::move(child)}};
}
inline NodeSpec every(std::string period_key, NodeSpec child)
{
  return NodeSpec{kind::Decorator{policy::PeriodicTimer{std::move(period_key)}}, {}, {}, {std::move(child)}};
}
inline NodeSpec recovery(NodeSpec main, NodeSpec fallback)
{
  return NodeSpec{kind::Recovery{}, {}, {}, {std::move(main), std::move(fallback)}};
}
inline NodeSpec action(std::string name, std::vector<Assignment> effects = {})
{
  return NodeSpec{kind::Action{std::move(name), std::move(effects)}, {}, {}, {}};
}
inline NodeSpec query(std::string name, std::optional<Predicate> condition = std::nullopt)
{
  return NodeSpec{kind::Query{std::move(name), std::move(condition)}, {}, {}, {}};
}

/// Materializes a spec; nodes without an explicit id get preorder ids n0, n1, ...
inline BehaviorTree tree(const NodeSpec& spec, TreeMetadata meta = {})
{
  BehaviorTree t;
  t.metadata = std::move(meta);
  std::size_t counter = 0;
  std::function<std::string(const NodeSpec&)> add = [&](const NodeSpec& s) {
    Node n;
    n.id = s.id.empty() ? auto_id(counter) : s.id;
    ++counter;
    n.kind = s.kind;
    n.label = s.label;
    n.approx = s.approx;
    std::string id = n.id;
    t.add(std::move(n));
    std::vector<std::string> kids;
    for (const auto& c : s.children) kids.push_back(add(c));
    t.at(id).children = std::move(kids);
    return id;
  };
  t.root_id = add(spec);
  return t;
}

}  // namespace build

}  // namespace medbt
