#pragma once

#include <algorithm>
#include <cmath>

#include "medbt/engine.hpp"

namespace medbt::sim {

using namespace medbt::literals;

/// Blackboard write applied between ticks once the clock reaches `at`.
struct ScheduledEvent {
  Timestamp at;
  std::string key;
  Value value;

  friend bool operator==(const ScheduledEvent&, const ScheduledEvent&) = default;
};

struct RunLimits {
  std::size_t max_ticks = 100'000;
  Duration max_virtual_time = 30_d;

  friend bool operator==(const RunLimits&, const RunLimits&) = default;
};

/// A run stopped by its tick or virtual-time budget. Distinct from a
/// protocol Failure; carries whatever trace was recorded so far.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(std::string what, ExecutionTrace partial, Timestamp at, std::size_t ticks)
      : Error(std::move(what)), trace(std::move(partial)), time(at), ticks(ticks)
  {
  }
  ExecutionTrace trace;
  Timestamp time;
  std::size_t ticks;
};

struct RunResult {
  /// Running only when the run is blocked on external leaves.
  Status status = Status::Running;
  ExecutionTrace trace;
  Timestamp end_time;
  std::size_t ticks = 0;
  std::vector<PendingLeaf> blocked_on;
  Blackboard blackboard;

  bool blocked() const { return !blocked_on.empty(); }
};

struct RunOptions {
  bool record_trace = true;
};

namespace detail {

inline std::vector<ScheduledEvent> sorted(std::vector<ScheduledEvent> events)
{
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  return events;
}

/// Drives one run over an already compiled tree. Time jumps straight to
/// the next leaf completion, timer firing or scheduled event.
inline RunResult drive(const CompiledTree& tree, LeafBindingSet bindings, Blackboard bb, const std::vector<ScheduledEvent>& events,
                       const RunLimits& limits, bool record)
{
  RuntimeState state(tree.size());
  VirtualClock clock;
  TickReport report;
  RunResult out;
  ExecutionTrace* trace = record ? &out.trace : nullptr;
  std::size_t next_event = 0;
  const Timestamp horizon = Timestamp{} + limits.max_virtual_time;

  for (;;) {
    while (next_event < events.size() && events[next_event].at <= clock.now) {
      const auto& e = events[next_event++];
      bb.set(e.key, e.value);
      if (trace) trace->push(TraceEvent{clock.now, TraceKind::EventApplied, e.key, {}, std::nullopt, e.value});
    }
    if (out.ticks >= limits.max_ticks) {
      throw BudgetExceeded("tick budget of " + std::to_string(limits.max_ticks) + " exceeded", std::move(out.trace), clock.now,
                           out.ticks);
    }
    const Status s = tick(tree, state, bb, bindings, clock, report, trace);
    ++out.ticks;
    if (s != Status::Running) {
      out.status = s;
      break;
    }
    std::optional<Timestamp> next = report.next_wake();
    if (next_event < events.size() && (!next || events[next_event].at < *next)) next = events[next_event].at;
    if (!next) {
      if (report.pending_external.empty()) throw Error("run stalled: nothing pending and nothing scheduled");
      for (std::size_t i : report.pending_external) {
        const Node& n = tree.node(i);
        out.blocked_on.push_back({i, n.id, leaf_name(n), n.label});
      }
      break;
    }
    if (horizon < *next) {
      throw BudgetExceeded("virtual time budget of " + format_duration(limits.max_virtual_time) + " exceeded", std::move(out.trace),
                           clock.now, out.ticks);
    }
    clock.advance_to(*next);
  }
  out.end_time = clock.now;
  out.blackboard = std::move(bb);
  return out;
}

}  // namespace detail

/// Ticks the tree over virtual time until the root's child completes, the
/// run blocks on external leaves, or a budget trips (BudgetExceeded).
/// `seed` replaces the bindings' seed.
inline RunResult run(const BehaviorTree& tree, LeafBindingSet bindings, Blackboard blackboard, std::vector<ScheduledEvent> events,
                     std::uint64_t seed, RunLimits limits = {}, RunOptions options = {})
{
  const CompiledTree compiled(tree);
  if (auto missing = unbound_leaves(compiled, bindings); !missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw BindingError("unbound leaves: " + names);
  }
  bindings.reseed(seed);
  return detail::drive(compiled, std::move(bindings), std::move(blackboard), detail::sorted(std::move(events)), limits,
                       options.record_trace);
}

struct Estimate {
  double p_success = 0.0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  /// Mean virtual time to completion, in seconds.
  double mean_duration = 0.0;

  /// Binomial standard error of p_success.
  double standard_error() const { return trials == 0 ? 0.0 : std::sqrt(p_success * (1.0 - p_success) / static_cast<double>(trials)); }
};

/// Seed used for trial `index` of an estimate seeded with `seed`.
constexpr std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t index) noexcept { return mix_seed(seed ^ mix_seed(index)); }

/// Monte-Carlo estimate over independent runs; trial i uses trial_seed(seed, i).
inline Estimate estimate_success_probability(const BehaviorTree& tree, const LeafBindingSet& bindings, std::size_t trials,
                                             std::uint64_t seed, const Blackboard& blackboard = {},
                                             const std::vector<ScheduledEvent>& events = {}, RunLimits limits = {})
{
  if (trials == 0) throw Error("trials must be at least 1");
  const CompiledTree compiled(tree);
  if (!unbound_leaves(compiled, bindings).empty()) throw BindingError("tree has unbound leaves");
  const auto ordered = detail::sorted(events);
  Estimate est;
  est.trials = trials;
  double total_time = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    LeafBindingSet b = bindings;
    b.reseed(trial_seed(seed, i));
    b.rewind();
    const RunResult r = detail::drive(compiled, std::move(b), blackboard, ordered, limits, false);
    if (r.blocked()) throw BindingError("cannot estimate a tree that waits on external leaves");
    if (r.status == Status::Success) ++est.successes;
    total_time += static_cast<double>(r.end_time.seconds);
  }
  est.p_success = static_cast<double>(est.successes) / static_cast<double>(trials);
  est.mean_duration = total_time / static_cast<double>(trials);
  return est;
}

}  // namespace medbt::sim
