#pragma once

#include <set>

#include "medbt/flow/flowchart.hpp"
#include "medbt/tree.hpp"

namespace medbt::flow {

class ConversionError : public FlowError {
 public:
  using FlowError::FlowError;
};

namespace detail {

inline const std::string kExit;  // virtual sink after every End block

/// Immediate post-dominator of every block, with all End blocks flowing
/// into a virtual exit. The chart must be valid (hence acyclic).
inline std::map<std::string, std::string, std::less<>> immediate_post_dominators(const Flowchart& chart)
{
  std::map<std::string, std::set<std::string>, std::less<>> pdom;
  std::function<const std::set<std::string>&(const std::string&)> visit = [&](const std::string& id) -> const std::set<std::string>& {
    if (auto it = pdom.find(id); it != pdom.end()) return it->second;
    std::set<std::string> s;
    const FlowBlock& b = chart.at(id);
    if (b.kind == BlockKind::End) {
      s = {kExit};
    } else {
      bool first = true;
      for (const FlowEdge* e : chart.outgoing(id)) {
        const auto& succ = visit(e->to);
        if (first) s = succ;
        else {
          std::set<std::string> both;
          std::set_intersection(s.begin(), s.end(), succ.begin(), succ.end(), std::inserter(both, both.end()));
          s = std::move(both);
        }
        first = false;
      }
    }
    s.insert(id);
    return pdom.emplace(id, std::move(s)).first->second;
  };
  visit(chart.start().id);

  // Strict post-dominators form a chain; the nearest one has the largest set.
  std::map<std::string, std::string, std::less<>> out;
  for (const auto& [id, set] : pdom) {
    std::string best = kExit;
    std::size_t best_size = 0;
    for (const auto& p : set) {
      if (p == id || p == kExit) continue;
      if (pdom.at(p).size() > best_size) {
        best = p;
        best_size = pdom.at(p).size();
      }
    }
    out.emplace(id, best);
  }
  return out;
}

class Converter {
 public:
  explicit Converter(const Flowchart& chart) : chart_(chart), ipdom_(immediate_post_dominators(chart)) {}

  NodeSpec run()
  {
    auto items = region(chart_.start().id, kExit, nullptr);
    if (items.empty()) return build::root(build::action(std::string(kAlwaysSuccess)));
    if (items.size() == 1) return build::root(std::move(items.front()));
    NodeSpec seq = build::sequence();
    seq.children = std::move(items);
    return build::root(std::move(seq));
  }

 private:
  /// Items of the Sequence for the chart region from `id` up to (excluding)
  /// `stop`. `then_of` is the innermost Decision whose true branch encloses
  /// the region, if any.
  std::vector<NodeSpec> region(std::string id, const std::string& stop, const FlowBlock* then_of)
  {
    std::vector<NodeSpec> items;
    while (id != stop) {
      const FlowBlock& b = chart_.at(id);
      switch (b.kind) {
        case BlockKind::Start:
          id = chart_.successor(id, Guard::None);
          break;
        case BlockKind::Process:
          items.push_back(build::action(b.name).labeled(b.label));
          id = chart_.successor(id, Guard::None);
          break;
        case BlockKind::End:
          if (b.outcome == Status::Failure) {
            // Sequence and Selector are monotone in their children's
            // outcomes, so "condition true leads to failure" cannot be
            // expressed once the Selector falls through to the else branch.
            if (then_of != nullptr) {
              throw ConversionError("failure exit '" + b.id + "' lies on the true branch of decision '" + then_of->id +
                                    "'; a Selector would fall through to the false branch instead of failing");
            }
            items.push_back(build::action(std::string(kAlwaysFailure)).labeled(b.label));
          }
          return items;
        case BlockKind::Decision: {
          const std::string join = ipdom_.at(id);
          auto then_items = region(chart_.successor(id, Guard::True), join, &b);
          auto else_items = region(chart_.successor(id, Guard::False), join, then_of);

          NodeSpec then_seq = build::sequence(build::query(b.name).labeled(b.label));
          for (auto& t : then_items) then_seq.children.push_back(std::move(t));
          NodeSpec sel = build::selector(std::move(then_seq));
          if (else_items.empty()) {
            sel.children.push_back(build::action(std::string(kAlwaysSuccess)));
          } else if (else_items.size() == 1 && std::holds_alternative<kind::Selector>(else_items.front().kind)) {
            for (auto& c : else_items.front().children) sel.children.push_back(std::move(c));
          } else if (else_items.size() == 1) {
            sel.children.push_back(std::move(else_items.front()));
          } else {
            NodeSpec seq = build::sequence();
            seq.children = std::move(else_items);
            sel.children.push_back(std::move(seq));
          }
          items.push_back(std::move(sel));
          id = join;
          break;
        }
      }
    }
    return items;
  }

  const Flowchart& chart_;
  std::map<std::string, std::string, std::less<>> ipdom_;
};

}  // namespace detail

/// Compiles an acyclic chart: chains become Sequences of Action leaves and
/// each Decision becomes Selector(Sequence(Query(condition), true branch...),
/// false branch), with the branches rejoining at the Decision's immediate
/// post-dominator. An empty false branch is an AlwaysSuccess leaf and a
/// failure exit an AlwaysFailure leaf. The result is normalized.
inline BehaviorTree convert_to_bt(const Flowchart& chart)
{
  require_valid(chart);
  TreeMetadata meta;
  meta.name = chart.name;
  meta.source = chart.source;
  return build::tree(detail::Converter(chart).run(), std::move(meta));
}

}  // namespace medbt::flow
