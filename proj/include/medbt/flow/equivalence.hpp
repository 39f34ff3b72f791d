#pragma once

#include <set>

#include "medbt/engine.hpp"
#include "medbt/flow/flowchart.hpp"

namespace medbt::flow {

struct AssignmentResult {
  std::map<std::string, bool, std::less<>> assignment;
  FlowRun chart;
  FlowRun tree;
  bool match = false;
};

struct EquivalenceReport {
  std::vector<AssignmentResult> results;

  std::size_t mismatches() const
  {
    return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.match; }));
  }
  bool all_match() const { return mismatches() == 0; }
};

/// Runs a tree to completion with Query leaves answered from `assignment`
/// and Action leaves succeeding; returns the root status and the order in
/// which non-builtin Action leaves were entered.
inline FlowRun run_with_conditions(const CompiledTree& tree, const std::map<std::string, bool, std::less<>>& assignment)
{
  LeafBindingSet bindings;
  bindings.set_fallback(LeafBinding::success());
  for (const auto& [name, value] : assignment) bindings.bind(name, value ? LeafBinding::success() : LeafBinding::failure());
  RuntimeState state(tree.size());
  Blackboard bb;
  VirtualClock clock;
  TickReport report;
  ExecutionTrace trace;
  FlowRun run;
  run.outcome = tick(tree, state, bb, bindings, clock, report, &trace);
  if (run.outcome == Status::Running) throw FlowError("tree did not complete in one tick");
  for (const auto& e : trace.events()) {
    if (e.kind != TraceKind::NodeEntered || e.leaf.empty() || is_builtin_leaf(e.leaf)) continue;
    if (std::holds_alternative<kind::Action>(tree.node(*tree.index_of(e.subject)).kind)) run.actions.push_back(e.leaf);
  }
  return run;
}

/// Compares chart and tree on every assignment of the chart's conditions.
/// The tree's Query names must be exactly the chart's conditions and its
/// Action names exactly the chart's process actions.
inline EquivalenceReport check_equivalence(const Flowchart& chart, const BehaviorTree& tree)
{
  require_valid(chart);
  const CompiledTree compiled(tree);
  const std::vector<std::string> conds = chart.conditions();
  if (conds.size() > 16) throw FlowError("too many conditions to enumerate (" + std::to_string(conds.size()) + " > 16)");

  std::set<std::string> chart_queries(conds.begin(), conds.end()), chart_actions, tree_queries, tree_actions;
  for (const auto& b : chart.blocks) {
    if (b.kind == BlockKind::Process) chart_actions.insert(b.name);
  }
  for (std::size_t i = 0; i < compiled.size(); ++i) {
    const Node& n = compiled.node(i);
    if (!is_leaf(n) || is_builtin_leaf(leaf_name(n))) continue;
    (std::holds_alternative<kind::Query>(n.kind) ? tree_queries : tree_actions).insert(leaf_name(n));
  }
  auto diff = [](const std::set<std::string>& a, const std::set<std::string>& b) {
    std::string s;
    for (const auto& x : a) {
      if (!b.count(x)) s += (s.empty() ? "" : ", ") + x;
    }
    return s;
  };
  std::string problems;
  if (auto d = diff(tree_queries, chart_queries); !d.empty()) problems += " tree queries not in chart: " + d + ";";
  if (auto d = diff(chart_queries, tree_queries); !d.empty()) problems += " chart conditions not in tree: " + d + ";";
  if (auto d = diff(tree_actions, chart_actions); !d.empty()) problems += " tree actions not in chart: " + d + ";";
  if (auto d = diff(chart_actions, tree_actions); !d.empty()) problems += " chart actions not in tree: " + d + ";";
  if (!problems.empty()) throw FlowError("vocabulary mismatch:" + problems);

  EquivalenceReport report;
  const std::uint64_t total = std::uint64_t{1} << conds.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    AssignmentResult r;
    for (std::size_t i = 0; i < conds.size(); ++i) r.assignment[conds[i]] = ((mask >> i) & 1) != 0;
    r.chart = execute_flowchart(chart, r.assignment);
    r.tree = run_with_conditions(compiled, r.assignment);
    r.match = r.chart == r.tree;
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace medbt::flow
