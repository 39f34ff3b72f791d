#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "medbt/value.hpp"

namespace medbt {

class ScriptExhausted : public BindingError {
 public:
  using BindingError::BindingError;
};

namespace behavior {

/// Outcomes consumed one per attempt; running out is an error.
struct Scripted {
  std::vector<Status> outcomes;
  friend bool operator==(const Scripted&, const Scripted&) = default;
};
struct Stochastic {
  double p_success = 0.5;
  friend bool operator==(const Stochastic&, const Stochastic&) = default;
};
/// Running until an outcome is submitted from outside.
struct External {
  friend bool operator==(const External&, const External&) = default;
};
struct Constant {
  Status outcome = Status::Success;
  friend bool operator==(const Constant&, const Constant&) = default;
};

}  // namespace behavior

using LeafBehavior = std::variant<behavior::Scripted, behavior::Stochastic, behavior::External, behavior::Constant>;

/// How a leaf name behaves at run time and how much virtual time an
/// attempt consumes.
struct LeafBinding {
  LeafBehavior behavior = behavior::Constant{};
  Duration duration{};

  friend bool operator==(const LeafBinding&, const LeafBinding&) = default;

  static LeafBinding success(Duration d = {}) { return {behavior::Constant{Status::Success}, d}; }
  static LeafBinding failure(Duration d = {}) { return {behavior::Constant{Status::Failure}, d}; }
  static LeafBinding external(Duration d = {}) { return {behavior::External{}, d}; }
  static LeafBinding scripted(std::vector<Status> outcomes, Duration d = {})
  {
    return {behavior::Scripted{std::move(outcomes)}, d};
  }
  static LeafBinding stochastic(double p, Duration d = {}) { return {behavior::Stochastic{p}, d}; }

  bool is_external() const { return std::holds_alternative<behavior::External>(behavior); }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, behavior::Scripted>) {
          j["kind"] = "scripted";
          j["outcomes"] = nlohmann::json::array();
          for (Status s : b.outcomes) j["outcomes"].push_back(std::string(to_string(s)));
        } else if constexpr (std::is_same_v<T, behavior::Stochastic>) {
          j["kind"] = "stochastic";
          j["p"] = b.p_success;
        } else if constexpr (std::is_same_v<T, behavior::External>) {
          j["kind"] = "external";
        } else {
          j["kind"] = b.outcome == Status::Success ? "success" : "failure";
        }
      },
      behavior);
    if (duration.seconds != 0) j["duration"] = duration.seconds;
    return j;
  }

  static LeafBinding from_json(const nlohmann::json& j)
  {
    LeafBinding b;
    const std::string k = j.at("kind").get<std::string>();
    if (k == "success") b.behavior = behavior::Constant{Status::Success};
    else if (k == "failure") b.behavior = behavior::Constant{Status::Failure};
    else if (k == "external") b.behavior = behavior::External{};
    else if (k == "stochastic") {
      const double p = j.at("p").get<double>();
      if (!(p >= 0.0 && p <= 1.0)) throw BindingError("stochastic p must lie in [0, 1]");
      b.behavior = behavior::Stochastic{p};
    } else if (k == "scripted") {
      behavior::Scripted s;
      for (const auto& o : j.at("outcomes")) {
        auto st = parse_status(o.get<std::string>());
        if (!st || *st == Status::Running) throw BindingError("scripted outcome must be success or failure");
        s.outcomes.push_back(*st);
      }
      b.behavior = std::move(s);
    } else {
      throw BindingError("unknown binding kind '" + k + "'");
    }
    if (j.contains("duration")) {
      auto s = json_seconds(j["duration"]);
      if (!s || *s < 0) throw BindingError("binding duration must be a non-negative number of seconds or a duration literal");
      b.duration = Duration{*s};
    }
    return b;
  }
};

/// SplitMix64 finalizer; derives independent seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Leaf name to binding, plus the per-run state the bindings consume
/// (script cursors, the random stream). Copying the set copies that state.
class LeafBindingSet {
 public:
  LeafBindingSet() = default;
  explicit LeafBindingSet(std::uint64_t seed) { reseed(seed); }

  void bind(std::string name, LeafBinding b) { bindings_.insert_or_assign(std::move(name), std::move(b)); }

  /// Used for any leaf without an explicit binding.
  void set_fallback(std::optional<LeafBinding> b) { fallback_ = std::move(b); }
  const std::optional<LeafBinding>& fallback() const noexcept { return fallback_; }

  const LeafBinding* explicit_binding(std::string_view name) const
  {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, LeafBinding, std::less<>>& explicit_bindings() const noexcept { return bindings_; }

  void reseed(std::uint64_t seed)
  {
    seed_ = seed;
    rng_.seed(mix_seed(seed));
  }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Rewinds script cursors and the random stream.
  void rewind()
  {
    cursors_.clear();
    reseed(seed_);
  }

  /// Completes one attempt of a non-external binding.
  Status draw(std::string_view name, const LeafBinding& b)
  {
    return std::visit(
      [&](const auto& beh) -> Status {
        using T = std::decay_t<decltype(beh)>;
        if constexpr (std::is_same_v<T, behavior::Scripted>) {
          auto& cursor = cursors_[std::string(name)];
          if (cursor >= beh.outcomes.size()) {
            throw ScriptExhausted("scripted outcomes for leaf '" + std::string(name) + "' exhausted after " +
                                  std::to_string(beh.outcomes.size()) + " attempts");
          }
          return beh.outcomes[cursor++];
        } else if constexpr (std::is_same_v<T, behavior::Stochastic>) {
          return uniform() < beh.p_success ? Status::Success : Status::Failure;
        } else if constexpr (std::is_same_v<T, behavior::Constant>) {
          return beh.outcome;
        } else {
          throw BindingError("external leaf '" + std::string(name) + "' cannot complete without a submitted outcome");
        }
      },
      b.behavior);
  }

  std::size_t attempts_consumed(std::string_view name) const
  {
    auto it = cursors_.find(name);
    return it == cursors_.end() ? 0 : it->second;
  }

  friend bool operator==(const LeafBindingSet&, const LeafBindingSet&) = default;

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::map<std::string, LeafBinding, std::less<>> bindings_;
  std::optional<LeafBinding> fallback_;
  std::map<std::string, std::size_t, std::less<>> cursors_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 rng_{mix_seed(0)};
};

}  // namespace medbt
