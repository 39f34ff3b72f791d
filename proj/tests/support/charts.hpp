#pragma once

#include "medbt/flow/flowchart.hpp"
#include "support/generators.hpp"

namespace medbt::gen {

/// Random acyclic charts built from nested if-then-else regions.
///
/// A region either flows into its successor on every path or terminates
/// on every path at its own End block. A Decision has at most one
/// terminating branch, so no block is reachable from two different joins
/// and conversion never duplicates a block. Failure exits are kept out of
/// anything the converter would place under a Decision's true branch,
/// unless `failure_in_true_branches` is set.
struct ChartGen {
  std::size_t max_decisions = 8;
  std::size_t max_blocks = 25;
  std::size_t max_depth = 4;
  bool failure_in_true_branches = false;

  flow::Flowchart operator()(Rng& rng) const
  {
    State s{rng, {}, 0, 0};
    s.chart.name = "random chart";
    add(s, flow::FlowBlock{"start", flow::BlockKind::Start, {}, Status::Success, {}});
    const Chain top = terminating(s, 0, true);
    s.chart.edges.push_back({"start", top.entry, flow::Guard::None});
    return s.chart;
  }

 private:
  struct State {
    Rng& rng;
    flow::Flowchart chart;
    std::size_t decisions;
    std::size_t counter;
  };

  struct Chain {
    std::string entry;
    bool can_fail = false;
  };

  static std::string add(State& s, flow::FlowBlock b)
  {
    std::string id = b.id;
    s.chart.blocks.push_back(std::move(b));
    return id;
  }

  bool room(const State& s, std::size_t n) const { return s.chart.blocks.size() + n <= max_blocks; }

  Chain terminating(State& s, std::size_t depth, bool fail_ok) const
  {
    fail_ok = fail_ok || failure_in_true_branches;
    const bool fail = fail_ok && coin(s.rng, 0.3);
    const std::string end = add(s, flow::FlowBlock{"e" + std::to_string(s.counter++), flow::BlockKind::End, {}, fail ? Status::Failure : Status::Success, {}});
    return chain(s, Chain{end, fail}, depth, true, fail_ok);
  }

  Chain flowing(State& s, const Chain& next, std::size_t depth) const { return chain(s, next, depth, false, false); }

  /// Prepends up to four steps to `next`, building backwards.
  Chain chain(State& s, Chain cur, std::size_t depth, bool may_terminate, bool fail_ok) const
  {
    const std::size_t steps = pick(s.rng, 1, 4);
    for (std::size_t i = 0; i < steps; ++i) {
      if (depth < max_depth && s.decisions < max_decisions && room(s, 1) && coin(s.rng, 0.45)) {
        const std::string id = "d" + std::to_string(s.counter++);
        const std::string cond = "C" + std::to_string(s.decisions++);
        add(s, flow::FlowBlock{id, flow::BlockKind::Decision, cond, Status::Success, cond + "?"});
        // With one terminating branch the rest of the chain is converted
        // inside the other branch; that must not be the true branch when
        // the rest can fail.
        enum { None, Then, Else } ends = None;
        if (may_terminate && room(s, 2) && coin(s.rng, 0.4)) ends = (cur.can_fail || coin(s.rng)) ? Then : Else;
        if (failure_in_true_branches && ends != None) ends = coin(s.rng) ? Then : Else;
        // The terminating branch is built first so its End block always fits.
        std::optional<Chain> yes, no;
        if (ends == Then) yes = terminating(s, depth + 1, false);
        if (ends == Else) no = terminating(s, depth + 1, fail_ok);
        if (!yes) yes = coin(s.rng, 0.1) ? cur : flowing(s, cur, depth + 1);
        if (!no) no = coin(s.rng, 0.3) ? cur : flowing(s, cur, depth + 1);
        s.chart.edges.push_back({id, yes->entry, flow::Guard::True});
        s.chart.edges.push_back({id, no->entry, flow::Guard::False});
        cur = Chain{id, yes->can_fail || no->can_fail};
      } else if (room(s, 1)) {
        const std::string id = "p" + std::to_string(s.counter++);
        add(s, flow::FlowBlock{id, flow::BlockKind::Process, "A" + id.substr(1), Status::Success, {}});
        s.chart.edges.push_back({id, cur.entry, flow::Guard::None});
        cur.entry = id;
      }
    }
    return cur;
  }
};

}  // namespace medbt::gen
