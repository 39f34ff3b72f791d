#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "medbt/bindings.hpp"
#include "medbt/blackboard.hpp"
#include "medbt/trace.hpp"
#include "medbt/validate.hpp"

namespace medbt {

/// Simulated time source. Only moves forward.
struct VirtualClock {
  Timestamp now{};

  void advance_to(Timestamp t)
  {
    if (t < now) throw Error("virtual clock cannot move backwards");
    now = t;
  }
  void advance_by(Duration d) { advance_to(now + d); }

  friend bool operator==(const VirtualClock&, const VirtualClock&) = default;
};

/// Validated tree flattened into preorder arrays for ticking.
class CompiledTree {
 public:
  explicit CompiledTree(BehaviorTree tree) : source_(std::move(tree))
  {
    require_valid(source_);
    std::function<std::size_t(const Node&, std::size_t)> add = [&](const Node& n, std::size_t parent) {
      const std::size_t i = nodes_.size();
      nodes_.push_back(n);
      children_.emplace_back();
      parents_.push_back(parent);
      index_.emplace(n.id, i);
      for (const auto& c : n.children) {
        const std::size_t ci = add(source_.at(c), i);
        children_[i].push_back(ci);
      }
      return i;
    };
    add(source_.root(), kNoParent);
  }

  static constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_.at(i); }
  std::size_t parent(std::size_t i) const { return parents_.at(i); }
  const BehaviorTree& source() const noexcept { return source_; }

  std::optional<std::size_t> index_of(std::string_view id) const
  {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool is_descendant(std::size_t node, std::size_t ancestor) const
  {
    for (std::size_t p = node; p != kNoParent; p = parents_[p]) {
      if (p == ancestor) return true;
    }
    return false;
  }

 private:
  BehaviorTree source_;
  std::vector<Node> nodes_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> parents_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class RecoveryPhase : std::uint8_t { Main, Recovering, Retry };

/// Per-node execution state. A default-constructed value is the state of a
/// node that has not been entered in the current pass.
struct NodeState {
  bool active = false;
  /// Sequence/Selector child to resume at.
  std::size_t resume = 0;
  /// RetryLimit attempts, RepeatUntil iterations.
  std::uint32_t attempts = 0;
  /// PeriodicTimer schedule.
  std::optional<Timestamp> next_fire;
  Timestamp fire_time{};
  /// Parallel child results; Running marks unfinished children.
  std::vector<Status> child_status;
  RecoveryPhase phase = RecoveryPhase::Main;
  /// When the node was entered (leaf durations count from here).
  Timestamp started{};

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

struct RuntimeState {
  std::vector<NodeState> nodes;
  /// Outcomes submitted for external leaves, by node index.
  std::map<std::size_t, Status> submitted;

  explicit RuntimeState(std::size_t n = 0) : nodes(n) {}

  void reset()
  {
    std::fill(nodes.begin(), nodes.end(), NodeState{});
    submitted.clear();
  }

  friend bool operator==(const RuntimeState&, const RuntimeState&) = default;
};

/// What a tick learned about waiting: the earliest times at which a leaf
/// attempt completes or a timer fires, and external leaves awaiting input.
struct TickReport {
  std::optional<Timestamp> leaf_wake;
  std::optional<Timestamp> timer_wake;
  std::vector<std::size_t> pending_external;

  std::optional<Timestamp> next_wake() const
  {
    if (leaf_wake && timer_wake) return std::min(*leaf_wake, *timer_wake);
    return leaf_wake ? leaf_wake : timer_wake;
  }
};

namespace detail {

class Ticker {
 public:
  Ticker(const CompiledTree& tree, RuntimeState& state, Blackboard& bb, LeafBindingSet& bindings, Timestamp now,
         TickReport& report, ExecutionTrace* trace)
      : tree_(tree), state_(state), bb_(bb), bindings_(bindings), now_(now), report_(report), trace_(trace)
  {
  }

  Status run() { return tick(0); }

  void halt(std::size_t i)
  {
    for (std::size_t c : tree_.children(i)) {
      if (state_.nodes[c].active) halt(c);
    }
    emit(TraceKind::Halted, i);
    state_.nodes[i] = NodeState{};
    state_.submitted.erase(i);
  }

 private:
  Status tick(std::size_t i)
  {
    if (!state_.nodes[i].active) {
      NodeState& s = state_.nodes[i];
      s = NodeState{};
      s.active = true;
      s.started = now_;
      emit(TraceKind::NodeEntered, i);
    }
    const Status r = dispatch(i);
    if (r != Status::Running) {
      state_.nodes[i] = NodeState{};
      emit(TraceKind::NodeReturned, i, r);
    }
    return r;
  }

  Status dispatch(std::size_t i)
  {
    const Node& n = tree_.node(i);
    const auto& kids = tree_.children(i);
    NodeState& s = state_.nodes[i];
    return std::visit(
      [&](const auto& k) -> Status {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kind::Root>) {
          return tick(kids.front());
        } else if constexpr (std::is_same_v<T, kind::Sequence>) {
          for (std::size_t c = s.resume; c < kids.size(); ++c) {
            const Status r = tick(kids[c]);
            if (r == Status::Running) {
              s.resume = c;
              return r;
            }
            if (r == Status::Failure) return r;
          }
          return Status::Success;
        } else if constexpr (std::is_same_v<T, kind::Selector>) {
          for (std::size_t c = s.resume; c < kids.size(); ++c) {
            const Status r = tick(kids[c]);
            if (r == Status::Running) {
              s.resume = c;
              return r;
            }
            if (r == Status::Success) return r;
          }
          return Status::Failure;
        } else if constexpr (std::is_same_v<T, kind::Parallel>) {
          return parallel(i, k.threshold);
        } else if constexpr (std::is_same_v<T, kind::Decorator>) {
          return decorator(i, k.policy);
        } else if constexpr (std::is_same_v<T, kind::Recovery>) {
          return recovery(i);
        } else {
          return leaf(i, n);
        }
      },
      n.kind);
  }

  Status parallel(std::size_t i, std::size_t threshold)
  {
    const auto& kids = tree_.children(i);
    NodeState& s = state_.nodes[i];
    const std::size_t n = kids.size();
    if (s.child_status.empty()) s.child_status.assign(n, Status::Running);
    for (std::size_t c = 0; c < n; ++c) {
      if (s.child_status[c] != Status::Running) continue;
      const Status r = tick(kids[c]);
      if (r == Status::Running) continue;
      s.child_status[c] = r;
      const auto succeeded = static_cast<std::size_t>(std::count(s.child_status.begin(), s.child_status.end(), Status::Success));
      const auto failed = static_cast<std::size_t>(std::count(s.child_status.begin(), s.child_status.end(), Status::Failure));
      if (succeeded >= threshold || failed > n - threshold) {
        for (std::size_t k : kids) {
          if (state_.nodes[k].active) halt(k);
        }
        return succeeded >= threshold ? Status::Success : Status::Failure;
      }
    }
    return Status::Running;
  }

  Status decorator(std::size_t i, const DecoratorPolicy& pol)
  {
    const std::size_t child = tree_.children(i).front();
    NodeState& s = state_.nodes[i];
    if (auto* retry = std::get_if<policy::RetryLimit>(&pol)) {
      for (;;) {
        const Status r = tick(child);
        if (r != Status::Failure) return r;
        if (++s.attempts >= retry->max_attempts) return Status::Failure;
      }
    }
    if (auto* repeat = std::get_if<policy::RepeatUntil>(&pol)) {
      for (;;) {
        if (!state_.nodes[child].active) {
          if (evaluate(repeat->condition, bb_)) return Status::Success;
          if (s.attempts >= repeat->max_iterations) return Status::Failure;
        }
        if (tick(child) == Status::Running) return Status::Running;
        ++s.attempts;
      }
    }
    const auto& timer = std::get<policy::PeriodicTimer>(pol);
    for (;;) {
      if (!state_.nodes[child].active) {
        if (!s.next_fire) s.next_fire = now_ + period(timer.period_key);
        if (now_ < *s.next_fire) {
          wake(report_.timer_wake, *s.next_fire);
          return Status::Running;
        }
        s.fire_time = *s.next_fire;
      }
      const Status r = tick(child);
      if (r != Status::Failure) return r;
      s.next_fire = s.fire_time + period(timer.period_key);
    }
  }

  Status recovery(std::size_t i)
  {
    const auto& kids = tree_.children(i);
    NodeState& s = state_.nodes[i];
    for (;;) {
      switch (s.phase) {
        case RecoveryPhase::Main: {
          const Status r = tick(kids[0]);
          if (r != Status::Failure) return r;
          s.phase = RecoveryPhase::Recovering;
          break;
        }
        case RecoveryPhase::Recovering: {
          const Status r = tick(kids[1]);
          if (r != Status::Success) return r;
          s.phase = RecoveryPhase::Retry;
          break;
        }
        case RecoveryPhase::Retry:
          return tick(kids[0]);
      }
    }
  }

  Status leaf(std::size_t i, const Node& n)
  {
    const std::string& name = leaf_name(n);
    if (name == kAlwaysSuccess) return Status::Success;
    if (name == kAlwaysFailure) return Status::Failure;

    const LeafBinding* b = bindings_.explicit_binding(name);
    if (b == nullptr) {
      if (auto* q = std::get_if<kind::Query>(&n.kind); q && q->condition) {
        return evaluate(*q->condition, bb_) ? Status::Success : Status::Failure;
      }
      if (bindings_.fallback()) b = &*bindings_.fallback();
    }
    if (b == nullptr) throw BindingError("leaf '" + name + "' (node " + n.id + ") has no binding");

    Status r;
    if (b->is_external()) {
      auto it = state_.submitted.find(i);
      if (it == state_.submitted.end()) {
        report_.pending_external.push_back(i);
        return Status::Running;
      }
      r = it->second;
      state_.submitted.erase(it);
    } else {
      if (b->duration.seconds > 0) {
        const Timestamp done = state_.nodes[i].started + b->duration;
        if (now_ < done) {
          wake(report_.leaf_wake, done);
          return Status::Running;
        }
      }
      r = bindings_.draw(name, *b);
    }
    if (r == Status::Success) {
      if (auto* a = std::get_if<kind::Action>(&n.kind)) {
        for (const auto& e : a->effects) write(e.key, e.value);
      }
    }
    return r;
  }

  Duration period(const std::string& key) const
  {
    const Duration d = bb_.get_as<Duration>(key);
    if (d.seconds <= 0) throw BlackboardError("timer period '" + key + "' must be positive");
    return d;
  }

  static void wake(std::optional<Timestamp>& slot, Timestamp t)
  {
    if (!slot || t < *slot) slot = t;
  }

  void write(const std::string& key, const Value& v)
  {
    bb_.set(key, v);
    if (trace_ != nullptr) trace_->push(TraceEvent{now_, TraceKind::BlackboardWrite, key, {}, std::nullopt, v});
  }

  void emit(TraceKind kind, std::size_t i, std::optional<Status> status = std::nullopt)
  {
    if (trace_ == nullptr) return;
    const Node& n = tree_.node(i);
    trace_->push(TraceEvent{now_, kind, n.id, leaf_name(n), status, std::nullopt});
  }

  const CompiledTree& tree_;
  RuntimeState& state_;
  Blackboard& bb_;
  LeafBindingSet& bindings_;
  Timestamp now_;
  TickReport& report_;
  ExecutionTrace* trace_;
};

}  // namespace detail

/// One atomic traversal of the tree at the clock's current time. Returns
/// the status of the root's child.
inline Status tick(const CompiledTree& tree, RuntimeState& state, Blackboard& blackboard, LeafBindingSet& bindings,
                   const VirtualClock& clock, TickReport& report, ExecutionTrace* trace = nullptr)
{
  if (state.nodes.size() != tree.size()) throw Error("runtime state does not match tree");
  report = TickReport{};
  return detail::Ticker(tree, state, blackboard, bindings, clock.now, report, trace).run();
}

/// Clears all per-node state; the next tick behaves like the first tick of
/// a fresh run.
inline void reset(RuntimeState& state) { state.reset(); }

/// Names of leaves that would fail to bind.
inline std::vector<std::string> unbound_leaves(const CompiledTree& tree, const LeafBindingSet& bindings)
{
  std::vector<std::string> out;
  if (bindings.fallback()) return out;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const Node& n = tree.node(i);
    if (!is_leaf(n)) continue;
    const std::string& name = leaf_name(n);
    if (is_builtin_leaf(name) || bindings.explicit_binding(name) != nullptr) continue;
    if (auto* q = std::get_if<kind::Query>(&n.kind); q && q->condition) continue;
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

struct PendingLeaf {
  std::size_t index = 0;
  std::string node_id;
  std::string leaf;
  std::string label;

  friend bool operator==(const PendingLeaf&, const PendingLeaf&) = default;
};

struct EngineOptions {
  bool record_trace = true;
};

/// Owns a compiled tree together with the state a run mutates: runtime
/// state, blackboard, bindings, clock and trace.
class Engine {
 public:
  Engine(BehaviorTree tree, LeafBindingSet bindings, Blackboard blackboard = {}, EngineOptions options = {})
      : tree_(std::move(tree)),
        state_(tree_.size()),
        blackboard_(std::move(blackboard)),
        initial_blackboard_(blackboard_),
        bindings_(std::move(bindings)),
        options_(options)
  {
    if (auto missing = unbound_leaves(tree_, bindings_); !missing.empty()) {
      std::string names;
      for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
      throw BindingError("unbound leaves: " + names);
    }
  }

  Status tick()
  {
    status_ = medbt::tick(tree_, state_, blackboard_, bindings_, clock_, report_,
                          options_.record_trace ? &trace_ : nullptr);
    return status_;
  }

  /// Ticks until the root's child completes. Only valid when nothing waits
  /// on time or external input; throws otherwise.
  Status run_to_completion(std::size_t max_ticks = 1'000'000)
  {
    for (std::size_t t = 0; t < max_ticks; ++t) {
      if (tick() != Status::Running) return status_;
      if (!report_.pending_external.empty() || report_.next_wake()) {
        throw Error("run_to_completion: tree is waiting on time or external input");
      }
    }
    throw Error("run_to_completion: tick budget exhausted");
  }

  /// Clears node state only.
  void reset()
  {
    state_.reset();
    status_ = Status::Running;
    report_ = TickReport{};
  }

  /// Node state, bindings, clock, blackboard and trace back to their initial values.
  void rewind()
  {
    reset();
    bindings_.rewind();
    clock_ = VirtualClock{};
    blackboard_ = initial_blackboard_;
    trace_.clear();
  }

  void advance_to(Timestamp t) { clock_.advance_to(t); }
  Timestamp now() const noexcept { return clock_.now; }

  /// Traced blackboard write.
  void write(std::string key, Value v)
  {
    blackboard_.set(key, v);
    if (options_.record_trace) trace_.push(TraceEvent{clock_.now, TraceKind::BlackboardWrite, std::move(key), {}, std::nullopt, std::move(v)});
  }

  void record(TraceEvent e)
  {
    if (options_.record_trace) trace_.push(std::move(e));
  }

  /// Supplies the outcome of an external leaf; applied at the next tick.
  void submit(std::size_t node_index, Status outcome)
  {
    if (outcome == Status::Running) throw BindingError("submitted outcome must be success or failure");
    if (node_index >= tree_.size() || !is_leaf(tree_.node(node_index))) throw BindingError("submission target is not a leaf");
    state_.submitted[node_index] = outcome;
  }

  std::vector<PendingLeaf> pending() const
  {
    std::vector<PendingLeaf> out;
    for (std::size_t i : report_.pending_external) {
      const Node& n = tree_.node(i);
      out.push_back({i, n.id, leaf_name(n), n.label});
    }
    return out;
  }

  Status status() const noexcept { return status_; }
  const TickReport& report() const noexcept { return report_; }
  const CompiledTree& tree() const noexcept { return tree_; }
  const RuntimeState& state() const noexcept { return state_; }
  Blackboard& blackboard() noexcept { return blackboard_; }
  const Blackboard& blackboard() const noexcept { return blackboard_; }
  LeafBindingSet& bindings() noexcept { return bindings_; }
  const LeafBindingSet& bindings() const noexcept { return bindings_; }
  ExecutionTrace& trace() noexcept { return trace_; }
  const ExecutionTrace& trace() const noexcept { return trace_; }
  const VirtualClock& clock() const noexcept { return clock_; }

 private:
  CompiledTree tree_;
  RuntimeState state_;
  Blackboard blackboard_;
  Blackboard initial_blackboard_;
  LeafBindingSet bindings_;
  VirtualClock clock_;
  ExecutionTrace trace_;
  TickReport report_;
  Status status_ = Status::Running;
  EngineOptions options_;
};

}  // namespace medbt
