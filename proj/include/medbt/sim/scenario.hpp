#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>

#include "medbt/dsl/parser.hpp"
#include "medbt/sim/simulator.hpp"

namespace medbt::sim {

class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// A runnable setup for one tree:
///   {"name", "tree": "<path relative to the scenario file>",
///    "bindings": {"Leaf": {"kind": "scripted|stochastic|external|success|failure",
///                          "outcomes": [...], "p": 0.5, "duration": "10m"}},
///    "defaultBinding": {...}, "blackboard": {"Key": value},
///    "events": [{"at": "12m", "key": "SpO2", "value": 92}],
///    "seed": 1, "limits": {"maxTicks": 100000, "maxVirtualTime": "30d"},
///    "expect": {"status": "success"}}
struct Scenario {
  std::string name;
  std::filesystem::path tree_path;
  BehaviorTree tree;
  LeafBindingSet bindings;
  Blackboard blackboard;
  std::vector<ScheduledEvent> events;
  std::uint64_t seed = 0;
  RunLimits limits;
  std::optional<Status> expected_status;
};

inline std::string read_file(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
  Scenario s;
  try {
    s.name = j.value("name", std::string{});
    s.tree_path = base_dir / j.at("tree").get<std::string>();
    s.tree = dsl::parse_or_throw(read_file(s.tree_path));
    if (j.contains("bindings")) {
      for (const auto& [name, b] : j["bindings"].items()) s.bindings.bind(name, LeafBinding::from_json(b));
    }
    if (j.contains("defaultBinding")) s.bindings.set_fallback(LeafBinding::from_json(j["defaultBinding"]));
    if (j.contains("blackboard")) s.blackboard = Blackboard::from_json(j["blackboard"]);
    if (j.contains("events")) {
      for (const auto& e : j["events"]) {
        auto at = json_seconds(e.at("at"));
        if (!at || *at < 0) throw ScenarioError("event time must be a non-negative duration: " + e.at("at").dump());
        s.events.push_back({Timestamp{*at}, e.at("key").get<std::string>(), from_json_value(e.at("value"))});
      }
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.bindings.reseed(s.seed);
    if (j.contains("limits")) {
      const auto& l = j["limits"];
      if (l.contains("maxTicks")) s.limits.max_ticks = l["maxTicks"].get<std::size_t>();
      if (l.contains("maxVirtualTime")) {
        auto t = json_seconds(l["maxVirtualTime"]);
        if (!t || *t <= 0) throw ScenarioError("maxVirtualTime must be a positive duration");
        s.limits.max_virtual_time = Duration{*t};
      }
    }
    if (j.contains("expect") && j["expect"].contains("status")) {
      s.expected_status = parse_status(j["expect"]["status"].get<std::string>());
      if (!s.expected_status) throw ScenarioError("unknown expected status " + j["expect"]["status"].dump());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("malformed scenario: ") + e.what());
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
  Scenario s = scenario_from_json(j, path.parent_path());
  if (s.name.empty()) s.name = path.stem().stem().string();
  return s;
}

inline RunResult run(const Scenario& s, RunOptions options = {})
{
  return run(s.tree, s.bindings, s.blackboard, s.events, s.seed, s.limits, options);
}

}  // namespace medbt::sim
