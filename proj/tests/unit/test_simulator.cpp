#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "medbt/sim/scenario.hpp"
#include "support/generators.hpp"

using namespace medbt;
using namespace medbt::build;
using namespace medbt::literals;

namespace {

std::vector<std::pair<std::string, std::int64_t>> entries_of(const ExecutionTrace& trace)
{
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const auto& e : trace.events()) {
    if (e.kind == TraceKind::NodeEntered && !e.leaf.empty()) out.emplace_back(e.leaf, e.time.seconds);
  }
  return out;
}

// Closed-form success probability for Sequence/Selector/Retry trees over
// independent stochastic leaves.
double exact_probability(const BehaviorTree& t, const Node& n, const std::map<std::string, double>& p)
{
  if (is_leaf(n)) return p.at(leaf_name(n));
  if (std::holds_alternative<kind::Root>(n.kind)) return exact_probability(t, t.at(n.children.front()), p);
  if (std::holds_alternative<kind::Sequence>(n.kind)) {
    double q = 1.0;
    for (const auto& c : n.children) q *= exact_probability(t, t.at(c), p);
    return q;
  }
  if (std::holds_alternative<kind::Selector>(n.kind)) {
    double fail = 1.0;
    for (const auto& c : n.children) fail *= 1.0 - exact_probability(t, t.at(c), p);
    return 1.0 - fail;
  }
  const auto& d = std::get<kind::Decorator>(n.kind);
  const auto& r = std::get<policy::RetryLimit>(d.policy);
  return 1.0 - std::pow(1.0 - exact_probability(t, t.at(n.children.front()), p), r.max_attempts);
}

}  // namespace

TEST(Simulator, DurationsAdvanceVirtualTime)
{
  auto t = tree(root(sequence(action("A"), action("B"), action("C"))));
  LeafBindingSet b;
  b.bind("A", LeafBinding::success(10_min));
  b.bind("B", LeafBinding::success(5_min));
  b.bind("C", LeafBinding::success());
  auto r = sim::run(t, b, {}, {}, 1);
  EXPECT_EQ(r.status, Status::Success);
  EXPECT_EQ(r.end_time, Timestamp{} + 15_min);
  auto entries = entries_of(r.trace);
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[1], std::make_pair(std::string("B"), std::int64_t{600}));
  EXPECT_EQ(entries[2], std::make_pair(std::string("C"), std::int64_t{900}));
  // One tick per completion point, not per second.
  EXPECT_LE(r.ticks, 4u);
}

TEST(Simulator, ScheduledEventInterruptsViaTimer)
{
  auto t = tree(root(parallel(1, every("Period", sequence(query("Low", Predicate{"SpO2", CompareOp::Less, 93.0}), action("Treat"))),
                              action("LongTask"))));
  LeafBindingSet b;
  b.bind("Treat", LeafBinding::success(30_s));
  b.bind("LongTask", LeafBinding::success(1_h));
  Blackboard bb;
  bb.set("SpO2", 98.0);
  bb.set("Period", Duration{60});
  auto r = sim::run(t, b, bb, {{Timestamp{} + 7_min, "SpO2", 92.0}}, 1);
  EXPECT_EQ(r.status, Status::Success);
  EXPECT_EQ(r.end_time, Timestamp{} + 7_min + 30_s);
  bool applied = false;
  bool halted = false;
  for (const auto& e : r.trace.events()) {
    if (e.kind == TraceKind::EventApplied) {
      applied = true;
      EXPECT_EQ(e.time, Timestamp{} + 7_min);
      EXPECT_EQ(e.subject, "SpO2");
      EXPECT_EQ(e.value, Value{92.0});
    }
    if (e.kind == TraceKind::Halted && e.leaf == "LongTask") halted = true;
  }
  EXPECT_TRUE(applied);
  EXPECT_TRUE(halted);
  EXPECT_EQ(std::get<double>(r.blackboard.get("SpO2")), 92.0);
}

TEST(Simulator, EventsAreAppliedInTimeOrderRegardlessOfInputOrder)
{
  auto t = tree(root(action("Wait")));
  LeafBindingSet b;
  b.bind("Wait", LeafBinding::success(1_h));
  auto r = sim::run(t, b, {}, {{Timestamp{} + 30_min, "X", 2.0}, {Timestamp{} + 10_min, "X", 1.0}}, 1);
  EXPECT_EQ(std::get<double>(r.blackboard.get("X")), 2.0);
}

TEST(Simulator, BlocksOnExternalLeaf)
{
  auto t = tree(root(sequence(action("Auto"), action("Ask"))));
  LeafBindingSet b;
  b.bind("Auto", LeafBinding::success(1_min));
  b.bind("Ask", LeafBinding::external());
  auto r = sim::run(t, b, {}, {}, 1);
  EXPECT_EQ(r.status, Status::Running);
  ASSERT_TRUE(r.blocked());
  EXPECT_EQ(r.blocked_on.front().leaf, "Ask");
  EXPECT_EQ(r.end_time, Timestamp{} + 1_min);
}

TEST(Simulator, TickBudgetIsDistinctFromFailure)
{
  auto t = tree(root(every("P", action("Check"))));
  LeafBindingSet b;
  b.bind("Check", LeafBinding::failure());
  Blackboard bb;
  bb.set("P", Duration{60});
  sim::RunLimits limits;
  limits.max_ticks = 50;
  try {
    sim::run(t, b, bb, {}, 1, limits);
    FAIL() << "expected BudgetExceeded";
  } catch (const sim::BudgetExceeded& e) {
    EXPECT_EQ(e.ticks, 50u);
    EXPECT_FALSE(e.trace.empty());
  }
}

TEST(Simulator, VirtualTimeBudget)
{
  auto t = tree(root(every("P", action("Check"))));
  LeafBindingSet b;
  b.bind("Check", LeafBinding::failure());
  Blackboard bb;
  bb.set("P", Duration{3600});
  sim::RunLimits limits;
  limits.max_virtual_time = 1_d;
  try {
    sim::run(t, b, bb, {}, 1, limits);
    FAIL() << "expected BudgetExceeded";
  } catch (const sim::BudgetExceeded& e) {
    EXPECT_EQ(e.time, Timestamp{} + 1_d);
    EXPECT_EQ(e.ticks, 25u);
  }
}

TEST(Simulator, UnboundLeavesAreRejectedUpFront)
{
  auto t = tree(root(sequence(action("A"), action("B"))));
  LeafBindingSet b;
  b.bind("A", LeafBinding::success());
  EXPECT_THROW(sim::run(t, b, {}, {}, 1), BindingError);
}

TEST(Simulator, SameSeedSameTrace)
{
  gen::Rng rng(11);
  gen::PlainTreeGen g;
  for (int i = 0; i < 50; ++i) {
    auto t = g(rng);
    LeafBindingSet b;
    for (const auto& name : gen::leaf_names(t)) {
      b.bind(name, LeafBinding::stochastic(0.5, Duration{static_cast<std::int64_t>(gen::pick(rng, 0, 120))}));
    }
    auto a = sim::run(t, b, {}, {}, 99);
    auto c = sim::run(t, b, {}, {}, 99);
    EXPECT_EQ(a.trace, c.trace);
    EXPECT_EQ(a.status, c.status);
    EXPECT_EQ(a.end_time, c.end_time);
  }
}

TEST(MonteCarlo, SingleLeafMatchesBinding)
{
  auto t = tree(root(action("A")));
  LeafBindingSet b;
  b.bind("A", LeafBinding::stochastic(0.3));
  auto est = sim::estimate_success_probability(t, b, 5000, 7);
  EXPECT_NEAR(est.p_success, 0.3, 3 * std::sqrt(0.3 * 0.7 / 5000));
  EXPECT_EQ(est.trials, 5000u);
}

TEST(MonteCarlo, ReproducibleAndSeedSensitive)
{
  auto t = tree(root(sequence(action("A"), action("B"))));
  LeafBindingSet b;
  b.set_fallback(LeafBinding::stochastic(0.5));
  auto x = sim::estimate_success_probability(t, b, 2000, 42);
  auto y = sim::estimate_success_probability(t, b, 2000, 42);
  auto z = sim::estimate_success_probability(t, b, 2000, 43);
  EXPECT_EQ(x.successes, y.successes);
  EXPECT_EQ(x.p_success, y.p_success);
  EXPECT_NE(x.successes, z.successes);
}

TEST(MonteCarlo, TrialSeedsAreDistinct)
{
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(sim::trial_seed(5, i));
  EXPECT_EQ(seen.size(), 10000u);
}

TEST(MonteCarlo, MatchesClosedFormOnRandomTrees)
{
  gen::Rng rng(2024);
  gen::PlainTreeGen g;
  g.allow_parallel = false;
  for (int i = 0; i < 20; ++i) {
    auto t = g(rng);
    std::map<std::string, double> p;
    LeafBindingSet b;
    for (const auto& name : gen::leaf_names(t)) {
      p[name] = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
      b.bind(name, LeafBinding::stochastic(p[name]));
    }
    const double exact = exact_probability(t, t.root(), p);
    const std::size_t n = 4000;
    auto est = sim::estimate_success_probability(t, b, n, 1000 + i);
    const double sigma = std::sqrt(exact * (1 - exact) / n);
    EXPECT_NEAR(est.p_success, exact, 4 * sigma + 1e-9) << "tree " << i;
  }
}

TEST(MonteCarlo, RetryRaisesProbability)
{
  auto t = tree(root(retry(3, action("A"))));
  LeafBindingSet b;
  b.bind("A", LeafBinding::stochastic(0.5));
  auto est = sim::estimate_success_probability(t, b, 8000, 3);
  EXPECT_NEAR(est.p_success, 0.875, 3 * std::sqrt(0.875 * 0.125 / 8000));
}

TEST(Scenario, ParsesAllFields)
{
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "medbt_scenario_test";
  fs::create_directories(dir);
  std::ofstream(dir / "t.bt") << "root\n  sequence\n    action A\n    query Low when SpO2 < 93\n";
  auto j = nlohmann::json::parse(R"({
    "name": "x", "tree": "t.bt",
    "bindings": {"A": {"kind": "scripted", "outcomes": ["failure", "success"], "duration": "2m"}},
    "defaultBinding": {"kind": "failure"},
    "blackboard": {"SpO2": 97, "Tca": {"duration": "6h"}},
    "events": [{"at": "5m", "key": "SpO2", "value": 90}],
    "seed": 9, "limits": {"maxTicks": 10, "maxVirtualTime": "1h"},
    "expect": {"status": "failure"}
  })");
  auto s = sim::scenario_from_json(j, dir);
  EXPECT_EQ(s.name, "x");
  EXPECT_EQ(leaf_count(s.tree), 2u);
  EXPECT_EQ(*s.bindings.explicit_binding("A"), LeafBinding::scripted({Status::Failure, Status::Success}, 2_min));
  EXPECT_EQ(s.blackboard.get("Tca"), Value{Duration{21600}});
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_EQ(s.events[0].at, Timestamp{} + 5_min);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.limits.max_ticks, 10u);
  EXPECT_EQ(s.limits.max_virtual_time, 1_h);
  EXPECT_EQ(s.expected_status, Status::Failure);

  auto r = sim::run(s);
  EXPECT_EQ(r.status, Status::Failure);
  EXPECT_EQ(r.end_time, Timestamp{} + 2_min);
}

TEST(Scenario, RejectsMalformedInput)
{
  const auto dir = std::filesystem::temp_directory_path();
  EXPECT_THROW(sim::scenario_from_json(nlohmann::json::parse(R"({"name": "x"})"), dir), sim::ScenarioError);
  EXPECT_THROW(sim::scenario_from_json(nlohmann::json::parse(R"({"tree": "does-not-exist.bt"})"), dir), Error);
  std::ofstream(dir / "medbt_ok.bt") << "root\n  action A\n";
  EXPECT_THROW(sim::scenario_from_json(nlohmann::json::parse(R"({"tree": "medbt_ok.bt", "events": [{"at": "-5m", "key": "k", "value": 1}]})"), dir),
               sim::ScenarioError);
  EXPECT_THROW(sim::scenario_from_json(nlohmann::json::parse(R"({"tree": "medbt_ok.bt", "expect": {"status": "maybe"}})"), dir),
               sim::ScenarioError);
  EXPECT_THROW(sim::scenario_from_json(nlohmann::json::parse(R"({"tree": "medbt_ok.bt", "bindings": {"A": {"kind": "sometimes"}}})"), dir),
               BindingError);
}
