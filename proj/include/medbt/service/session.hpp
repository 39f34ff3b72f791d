#pragma once

#include <optional>
#include <string>

#include "medbt/dsl/parser.hpp"
#include "medbt/dsl/serializer.hpp"
#include "medbt/engine.hpp"

namespace medbt::service {

class NotFound : public Error {
 public:
  using Error::Error;
};

/// Request that conflicts with the session's current state: wrong or stale
/// leaf, terminal session, version mismatch, nothing to advance to.
class Conflict : public Error {
 public:
  using Error::Error;
};

class BadRequest : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::size_t kSettleTickLimit = 100'000;

inline nlohmann::json bindings_json(const LeafBindingSet& b)
{
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, binding] : b.explicit_bindings()) j[name] = binding.to_json();
  return j;
}

}  // namespace detail

/// Node list in preorder with kind parameters, suitable for rendering.
inline nlohmann::json tree_json(const BehaviorTree& t)
{
  nlohmann::json nodes = nlohmann::json::array();
  for_each_preorder(t, [&](const Node& n, std::size_t depth) {
    nlohmann::json j{{"id", n.id}, {"kind", std::string(kind_name(n.kind))}, {"depth", depth}, {"children", n.children}};
    if (!n.label.empty()) j["label"] = n.label;
    if (n.approx) j["approx"] = true;
    std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kind::Parallel>) {
          j["threshold"] = k.threshold;
        } else if constexpr (std::is_same_v<T, kind::Decorator>) {
          if (auto* r = std::get_if<policy::RetryLimit>(&k.policy)) j["attempts"] = r->max_attempts;
          if (auto* p = std::get_if<policy::PeriodicTimer>(&k.policy)) j["periodKey"] = p->period_key;
          if (auto* r = std::get_if<policy::RepeatUntil>(&k.policy)) {
            j["condition"] = dsl::format_predicate(r->condition);
            j["maxIterations"] = r->max_iterations;
          }
        } else if constexpr (std::is_same_v<T, kind::Action>) {
          j["name"] = k.name;
          for (const auto& e : k.effects) j["effects"].push_back(e.key + " = " + dsl::format_literal(e.value));
        } else if constexpr (std::is_same_v<T, kind::Query>) {
          j["name"] = k.name;
          if (k.condition) j["condition"] = dsl::format_predicate(*k.condition);
        }
      },
      n.kind);
    nodes.push_back(std::move(j));
  });
  return {{"root", t.root_id}, {"nodes", std::move(nodes)}};
}

/// Which leaves a new session asks the user about.
enum class Interactive { Queries, All, None };

inline std::optional<Interactive> parse_interactive(std::string_view s)
{
  if (s == "queries") return Interactive::Queries;
  if (s == "all") return Interactive::All;
  if (s == "none") return Interactive::None;
  return std::nullopt;
}

/// Binds leaves external according to `mode`. Queries guarded by a `when`
/// predicate read the blackboard and are never made external. Explicit
/// bindings in `overrides` win; everything else succeeds immediately.
inline LeafBindingSet interactive_bindings(const BehaviorTree& tree, Interactive mode, const LeafBindingSet& overrides)
{
  LeafBindingSet b;
  b.set_fallback(LeafBinding::success());
  if (mode != Interactive::None) {
    for_each_preorder(tree, [&](const Node& n, std::size_t) {
      if (!is_leaf(n) || is_builtin_leaf(leaf_name(n))) return;
      if (auto* q = std::get_if<kind::Query>(&n.kind); q && !q->condition) b.bind(q->name, LeafBinding::external());
      if (mode == Interactive::All && std::holds_alternative<kind::Action>(n.kind)) b.bind(leaf_name(n), LeafBinding::external());
    });
  }
  for (const auto& [name, binding] : overrides.explicit_bindings()) b.bind(name, binding);
  if (overrides.fallback()) b.set_fallback(overrides.fallback());
  return b;
}

/// A live interactive run. Every accepted mutation is one event in `log`;
/// rebuilding from the log reproduces the engine state exactly.
///
/// Log events (one JSON object per line):
///   {"type": "created", "protocol", "dsl", "bindings", "defaultBinding", "blackboard", "seed"}
///   {"type": "outcome", "leaf", "node", "outcome", "elapsed"}
///   {"type": "advance", "to"}
class Session {
 public:
  static Session create(std::string id, std::string protocol, const BehaviorTree& tree, LeafBindingSet bindings,
                        Blackboard blackboard, std::uint64_t seed)
  {
    nlohmann::json created{{"type", "created"},
                           {"protocol", protocol},
                           {"dsl", dsl::serialize(tree)},
                           {"bindings", detail::bindings_json(bindings)},
                           {"blackboard", blackboard.to_json()},
                           {"seed", seed}};
    if (bindings.fallback()) created["defaultBinding"] = bindings.fallback()->to_json();
    return from_created(std::move(id), created);
  }

  /// Rebuilds a session from its event log.
  static Session replay(std::string id, const std::vector<nlohmann::json>& log)
  {
    if (log.empty() || log.front().value("type", "") != "created") throw Error("session log must start with a created event");
    Session s = from_created(std::move(id), log.front());
    for (std::size_t i = 1; i < log.size(); ++i) s.apply(log[i]);
    return s;
  }

  /// Answers a pending external leaf. `elapsed` defaults to the leaf's
  /// bound duration; virtual time moves forward by it before the answer
  /// lands, processing any timer firings or leaf completions on the way.
  const nlohmann::json& submit(std::string_view leaf, Status outcome, std::optional<Duration> elapsed,
                               std::optional<std::size_t> expected_version = std::nullopt)
  {
    check_version(expected_version);
    if (outcome == Status::Running) throw BadRequest("outcome must be success or failure");
    if (terminal()) throw Conflict("session is already " + std::string(to_string(engine_.status())));
    const auto pending = engine_.pending();
    auto it = std::find_if(pending.begin(), pending.end(), [&](const PendingLeaf& p) { return p.leaf == leaf; });
    if (it == pending.end()) {
      throw Conflict("leaf '" + std::string(leaf) + "' is not pending" +
                     (pending.empty() ? std::string() : " (pending: " + pending.front().leaf + ")"));
    }
    if (elapsed && elapsed->seconds < 0) throw BadRequest("elapsed must not be negative");
    Duration d = elapsed.value_or(Duration{});
    if (!elapsed) {
      if (const LeafBinding* b = engine_.bindings().explicit_binding(leaf)) d = b->duration;
    }
    nlohmann::json event{{"type", "outcome"},
                         {"leaf", std::string(leaf)},
                         {"node", it->node_id},
                         {"outcome", std::string(to_string(outcome))},
                         {"elapsed", d.seconds}};
    return commit(std::move(event));
  }

  /// Moves virtual time to `to` (default: the next scheduled wake) and
  /// lets the tree react.
  const nlohmann::json& advance(std::optional<Timestamp> to, std::optional<std::size_t> expected_version = std::nullopt)
  {
    check_version(expected_version);
    if (terminal()) throw Conflict("session is already " + std::string(to_string(engine_.status())));
    if (!to) {
      to = engine_.report().next_wake();
      if (!to) throw Conflict("nothing is scheduled; the session waits only on input");
    }
    if (*to < engine_.now()) throw BadRequest("cannot advance into the past");
    return commit(nlohmann::json{{"type", "advance"}, {"to", to->seconds}});
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& protocol() const noexcept { return protocol_; }
  const Engine& engine() const noexcept { return engine_; }
  const std::vector<nlohmann::json>& log() const noexcept { return log_; }
  /// Number of events applied; clients may echo it to detect races.
  std::size_t version() const noexcept { return log_.size(); }
  Status status() const noexcept { return engine_.status(); }
  bool terminal() const noexcept { return engine_.status() != Status::Running; }
  std::vector<PendingLeaf> pending() const { return terminal() ? std::vector<PendingLeaf>{} : engine_.pending(); }

  /// Time of the next timer firing or leaf completion while the session
  /// waits on nothing but the clock.
  std::optional<Timestamp> waiting_until() const
  {
    if (terminal() || !engine_.pending().empty()) return std::nullopt;
    return engine_.report().next_wake();
  }

  /// Copy under a new id; the log is copied so the fork replays on its own.
  Session fork(std::string new_id) const
  {
    Session s = *this;
    s.id_ = std::move(new_id);
    s.log_.front()["forkedFrom"] = id_;
    return s;
  }

  /// Snapshot for clients. Nodes never entered report "idle"; halted nodes
  /// go back to "idle".
  nlohmann::json view() const
  {
    const auto& tree = engine_.tree().source();
    nlohmann::json statuses = nlohmann::json::object();
    const auto latest = engine_.trace().latest_statuses();
    for (const auto& [id, n] : tree.nodes) {
      auto it = latest.find(id);
      statuses[id] = it == latest.end() ? "idle" : std::string(to_string(it->second));
    }
    nlohmann::json pending_all = nlohmann::json::array();
    for (const auto& p : pending()) {
      pending_all.push_back({{"leaf", p.leaf}, {"node", p.node_id}, {"prompt", p.label.empty() ? p.leaf : p.label}});
    }
    nlohmann::json j{{"id", id_},
                     {"protocol", protocol_},
                     {"status", std::string(to_string(status()))},
                     {"time", engine_.now().seconds},
                     {"version", version()},
                     {"pending", pending_all.empty() ? nlohmann::json() : pending_all.front()},
                     {"pendingAll", pending_all},
                     {"waitingUntil", nullptr},
                     {"tree", tree_json(tree)},
                     {"statuses", statuses},
                     {"blackboard", engine_.blackboard().to_json()},
                     {"traceSize", engine_.trace().size()}};
    if (auto w = waiting_until()) j["waitingUntil"] = w->seconds;
    if (log_.front().contains("forkedFrom")) j["forkedFrom"] = log_.front()["forkedFrom"];
    return j;
  }

  /// Same engine state, status, pending leaves and log.
  friend bool operator==(const Session& a, const Session& b)
  {
    return a.id_ == b.id_ && a.protocol_ == b.protocol_ && a.log_ == b.log_ && a.engine_.state() == b.engine_.state() &&
           a.engine_.blackboard() == b.engine_.blackboard() && a.engine_.clock() == b.engine_.clock() &&
           a.engine_.trace() == b.engine_.trace() && a.engine_.bindings() == b.engine_.bindings() &&
           a.engine_.status() == b.engine_.status() && a.pending() == b.pending();
  }

 private:
  Session(std::string id, std::string protocol, Engine engine)
      : id_(std::move(id)), protocol_(std::move(protocol)), engine_(std::move(engine))
  {
  }

  static Session from_created(std::string id, const nlohmann::json& created)
  {
    try {
      BehaviorTree tree = dsl::parse_or_throw(created.at("dsl").get<std::string>());
      LeafBindingSet bindings;
      for (const auto& [name, b] : created.at("bindings").items()) bindings.bind(name, LeafBinding::from_json(b));
      if (created.contains("defaultBinding")) bindings.set_fallback(LeafBinding::from_json(created["defaultBinding"]));
      const auto seed = created.at("seed").get<std::uint64_t>();
      bindings.reseed(seed);
      Blackboard bb = Blackboard::from_json(created.at("blackboard"));
      Session s(std::move(id), created.at("protocol").get<std::string>(), Engine(std::move(tree), std::move(bindings), std::move(bb)));
      s.engine_.tick();
      settle(s.engine_);
      s.log_.push_back(created);
      return s;
    } catch (const nlohmann::json::exception& e) {
      throw BadRequest(std::string("malformed session event: ") + e.what());
    }
  }

  void check_version(std::optional<std::size_t> expected) const
  {
    if (expected && *expected != version()) {
      throw Conflict("stale version " + std::to_string(*expected) + " (current " + std::to_string(version()) + ")");
    }
  }

  /// Applies the event to a copy and swaps it in only if it succeeds.
  const nlohmann::json& commit(nlohmann::json event)
  {
    Session next = *this;
    next.apply(event);
    *this = std::move(next);
    return log_.back();
  }

  void apply(const nlohmann::json& event)
  {
    const std::string type = event.at("type").get<std::string>();
    if (type == "outcome") {
      const std::string leaf = event.at("leaf").get<std::string>();
      const std::string node = event.at("node").get<std::string>();
      auto outcome = parse_status(event.at("outcome").get<std::string>());
      if (!outcome || *outcome == Status::Running) throw BadRequest("outcome must be success or failure");
      const Timestamp target = engine_.now() + Duration{event.at("elapsed").get<std::int64_t>()};
      run_wakes(engine_, target, true);
      if (terminal()) throw Conflict("session finished before the answer for '" + leaf + "' arrived");
      const auto pending = engine_.pending();
      auto it = std::find_if(pending.begin(), pending.end(), [&](const PendingLeaf& p) { return p.node_id == node; });
      if (it == pending.end()) throw Conflict("leaf '" + leaf + "' stopped waiting before the answer arrived");
      engine_.advance_to(target);
      engine_.submit(it->index, *outcome);
      engine_.tick();
      settle(engine_);
    } else if (type == "advance") {
      const Timestamp target{event.at("to").get<std::int64_t>()};
      run_wakes(engine_, target, false);
      if (!terminal() && engine_.now() < target) engine_.advance_to(target);
      settle(engine_);
    } else {
      throw BadRequest("unknown session event type '" + type + "'");
    }
    log_.push_back(event);
  }

  /// Ticks at every wake up to `target` (strictly before it when `strict`).
  static void run_wakes(Engine& e, Timestamp target, bool strict)
  {
    for (std::size_t n = 0; n < detail::kSettleTickLimit; ++n) {
      if (e.status() != Status::Running) return;
      auto w = e.report().next_wake();
      if (!w || (strict ? !(*w < target) : target < *w)) return;
      e.advance_to(*w);
      e.tick();
    }
    throw Error("session exceeded its tick budget");
  }

  /// Follows leaf completions until the tree finishes, waits on an external
  /// leaf, or waits on a timer. Timer waits are left for an explicit advance.
  static void settle(Engine& e)
  {
    for (std::size_t n = 0; n < detail::kSettleTickLimit; ++n) {
      if (e.status() != Status::Running || !e.pending().empty()) return;
      const auto& r = e.report();
      if (!r.leaf_wake) {
        if (!r.timer_wake) throw Error("session stalled: nothing pending and nothing scheduled");
        return;
      }
      if (r.timer_wake && *r.timer_wake < *r.leaf_wake) return;
      e.advance_to(*r.leaf_wake);
      e.tick();
    }
    throw Error("session exceeded its tick budget");
  }

  std::string id_;
  std::string protocol_;
  Engine engine_;
  std::vector<nlohmann::json> log_;
};

}  // namespace medbt::service
