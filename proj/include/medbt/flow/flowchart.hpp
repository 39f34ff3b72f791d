#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "medbt/status.hpp"

namespace medbt::flow {

enum class BlockKind { Start, End, Process, Decision };

constexpr std::string_view to_string(BlockKind k) noexcept
{
  switch (k) {
    case BlockKind::Start: return "start";
    case BlockKind::End: return "end";
    case BlockKind::Process: return "process";
    case BlockKind::Decision: return "decision";
  }
  return "?";
}

struct FlowBlock {
  std::string id;
  BlockKind kind = BlockKind::Process;
  /// Action name for Process, condition name for Decision.
  std::string name;
  /// End blocks only.
  Status outcome = Status::Success;
  std::string label;

  friend bool operator==(const FlowBlock&, const FlowBlock&) = default;
};

enum class Guard { None, True, False };

struct FlowEdge {
  std::string from;
  std::string to;
  Guard guard = Guard::None;

  friend bool operator==(const FlowEdge&, const FlowEdge&) = default;
};

class FlowError : public Error {
 public:
  using Error::Error;
};

/// Diagnostic about a chart; `block` is empty for whole-chart problems.
struct FlowDiagnostic {
  std::string block;
  std::string message;

  std::string format() const { return block.empty() ? message : "block '" + block + "': " + message; }
  friend bool operator==(const FlowDiagnostic&, const FlowDiagnostic&) = default;
};

struct Flowchart {
  std::string name;
  std::string source;
  /// Blocks in document order.
  std::vector<FlowBlock> blocks;
  std::vector<FlowEdge> edges;

  const FlowBlock* find(std::string_view id) const
  {
    for (const auto& b : blocks) {
      if (b.id == id) return &b;
    }
    return nullptr;
  }
  const FlowBlock& at(std::string_view id) const
  {
    if (const FlowBlock* b = find(id)) return *b;
    throw FlowError("unknown block '" + std::string(id) + "'");
  }

  std::vector<const FlowEdge*> outgoing(std::string_view id) const
  {
    std::vector<const FlowEdge*> out;
    for (const auto& e : edges) {
      if (e.from == id) out.push_back(&e);
    }
    return out;
  }

  /// Target of the edge leaving `id` with the given guard.
  std::string successor(std::string_view id, Guard g) const
  {
    for (const auto& e : edges) {
      if (e.from == id && e.guard == g) return e.to;
    }
    throw FlowError("block '" + std::string(id) + "' has no such outgoing edge");
  }

  const FlowBlock& start() const
  {
    for (const auto& b : blocks) {
      if (b.kind == BlockKind::Start) return b;
    }
    throw FlowError("chart has no start block");
  }

  std::size_t count(BlockKind k) const
  {
    return static_cast<std::size_t>(std::count_if(blocks.begin(), blocks.end(), [&](const FlowBlock& b) { return b.kind == k; }));
  }

  /// Distinct Decision condition names in document order.
  std::vector<std::string> conditions() const
  {
    std::vector<std::string> out;
    for (const auto& b : blocks) {
      if (b.kind == BlockKind::Decision && std::find(out.begin(), out.end(), b.name) == out.end()) out.push_back(b.name);
    }
    return out;
  }

  friend bool operator==(const Flowchart&, const Flowchart&) = default;
};

/// Every chart invariant the chart breaks; empty iff the chart is valid.
inline std::vector<FlowDiagnostic> check(const Flowchart& chart)
{
  std::vector<FlowDiagnostic> out;
  std::map<std::string, const FlowBlock*, std::less<>> by_id;
  std::vector<std::string> starts;
  bool has_end = false;
  for (const auto& b : chart.blocks) {
    if (b.id.empty()) {
      out.push_back({"", "block with an empty id"});
      continue;
    }
    if (!by_id.emplace(b.id, &b).second) out.push_back({b.id, "duplicate block id"});
    if (b.kind == BlockKind::Start) starts.push_back(b.id);
    if (b.kind == BlockKind::End) {
      has_end = true;
      if (b.outcome == Status::Running) out.push_back({b.id, "end outcome must be success or failure"});
    }
    if ((b.kind == BlockKind::Process || b.kind == BlockKind::Decision) && b.name.empty()) {
      out.push_back({b.id, b.kind == BlockKind::Process ? "process block needs an action name" : "decision block needs a condition name"});
    }
  }
  if (starts.empty()) out.push_back({"", "chart has no start block"});
  for (std::size_t i = 1; i < starts.size(); ++i) out.push_back({starts[i], "multiple start blocks (first is '" + starts[0] + "')"});
  if (!has_end) out.push_back({"", "chart has no end block"});

  for (const auto& e : chart.edges) {
    if (!by_id.count(e.from)) out.push_back({e.from, "edge from unknown block '" + e.from + "'"});
    if (!by_id.count(e.to)) out.push_back({e.from, "edge to unknown block '" + e.to + "'"});
  }
  for (const auto& b : chart.blocks) {
    std::size_t plain = 0, yes = 0, no = 0;
    for (const FlowEdge* e : chart.outgoing(b.id)) {
      (e->guard == Guard::None ? plain : e->guard == Guard::True ? yes : no)++;
    }
    switch (b.kind) {
      case BlockKind::Start:
      case BlockKind::Process:
        if (plain != 1 || yes + no != 0) out.push_back({b.id, "needs exactly one unguarded outgoing edge"});
        break;
      case BlockKind::Decision:
        if (yes != 1) out.push_back({b.id, "decision needs exactly one true branch"});
        if (no != 1) out.push_back({b.id, "decision needs exactly one false branch"});
        if (plain != 0) out.push_back({b.id, "decision edges must be guarded true or false"});
        break;
      case BlockKind::End:
        if (plain + yes + no != 0) out.push_back({b.id, "end block cannot have outgoing edges"});
        break;
    }
  }
  if (!out.empty() || starts.empty()) return out;

  // Reachability and acyclicity by DFS from the start block.
  std::map<std::string, int, std::less<>> color;  // 1 = on stack, 2 = done
  std::vector<FlowDiagnostic> cycles;
  std::function<void(const std::string&)> dfs = [&](const std::string& id) {
    color[id] = 1;
    for (const FlowEdge* e : chart.outgoing(id)) {
      auto it = color.find(e->to);
      if (it == color.end()) dfs(e->to);
      else if (it->second == 1) cycles.push_back({e->to, "chart contains a cycle through this block (cyclic charts are not supported)"});
    }
    color[id] = 2;
  };
  dfs(starts[0]);
  out.insert(out.end(), cycles.begin(), cycles.end());
  for (const auto& b : chart.blocks) {
    if (!color.count(b.id)) out.push_back({b.id, "block is unreachable from start"});
  }
  return out;
}

inline void require_valid(const Flowchart& chart)
{
  auto d = check(chart);
  if (d.empty()) return;
  std::string msg = "invalid flowchart:";
  for (const auto& x : d) msg += "\n  " + x.format();
  throw FlowError(msg);
}

struct FlowParseResult {
  std::optional<Flowchart> chart;
  std::vector<FlowDiagnostic> diagnostics;

  bool ok() const { return chart.has_value(); }
  std::string format_diagnostics() const
  {
    std::string s;
    for (const auto& d : diagnostics) s += d.format() + "\n";
    return s;
  }
};

/// Reads the `.flow.json` document form:
///   {"name", "source", "blocks": [{"id", "kind", "action"|"condition"|"outcome", "label"}],
///    "edges": [{"from", "to", "guard": "true"|"false"}]}
inline FlowParseResult parse_flowchart_json(const nlohmann::json& doc)
{
  FlowParseResult r;
  auto& diags = r.diagnostics;
  if (!doc.is_object()) {
    diags.push_back({"", "flowchart document must be a JSON object"});
    return r;
  }
  Flowchart chart;
  auto text = [&](const nlohmann::json& obj, const char* key, const std::string& block) -> std::string {
    if (!obj.contains(key)) return {};
    if (!obj[key].is_string()) {
      diags.push_back({block, std::string("'") + key + "' must be a string"});
      return {};
    }
    return obj[key].get<std::string>();
  };
  chart.name = text(doc, "name", "");
  chart.source = text(doc, "source", "");
  if (!doc.contains("blocks") || !doc["blocks"].is_array()) diags.push_back({"", "missing 'blocks' array"});
  if (!doc.contains("edges") || !doc["edges"].is_array()) diags.push_back({"", "missing 'edges' array"});
  if (!diags.empty()) return r;

  for (const auto& jb : doc["blocks"]) {
    if (!jb.is_object()) {
      diags.push_back({"", "block entries must be objects"});
      continue;
    }
    FlowBlock b;
    b.id = text(jb, "id", "");
    if (b.id.empty()) {
      diags.push_back({"", "block without an id"});
      continue;
    }
    const std::string k = text(jb, "kind", b.id);
    b.label = text(jb, "label", b.id);
    if (k == "start") b.kind = BlockKind::Start;
    else if (k == "end") {
      b.kind = BlockKind::End;
      const std::string o = jb.contains("outcome") ? text(jb, "outcome", b.id) : "success";
      auto s = parse_status(o);
      if (!s || *s == Status::Running) diags.push_back({b.id, "end outcome must be 'success' or 'failure'"});
      else b.outcome = *s;
    } else if (k == "process") {
      b.kind = BlockKind::Process;
      b.name = text(jb, "action", b.id);
      if (b.name.empty()) diags.push_back({b.id, "process block needs an 'action'"});
    } else if (k == "decision") {
      b.kind = BlockKind::Decision;
      b.name = text(jb, "condition", b.id);
      if (b.name.empty()) diags.push_back({b.id, "decision block needs a 'condition'"});
    } else {
      diags.push_back({b.id, "unknown block kind '" + k + "' (expected start, end, process or decision)"});
      continue;
    }
    chart.blocks.push_back(std::move(b));
  }
  for (const auto& je : doc["edges"]) {
    if (!je.is_object()) {
      diags.push_back({"", "edge entries must be objects"});
      continue;
    }
    FlowEdge e;
    e.from = text(je, "from", "");
    e.to = text(je, "to", e.from);
    if (e.from.empty() || e.to.empty()) {
      diags.push_back({e.from, "edge needs 'from' and 'to'"});
      continue;
    }
    if (je.contains("guard") && !je["guard"].is_null()) {
      const auto& g = je["guard"];
      if (g == "true" || g == true) e.guard = Guard::True;
      else if (g == "false" || g == false) e.guard = Guard::False;
      else {
        diags.push_back({e.from, "edge guard must be \"true\" or \"false\""});
        continue;
      }
    }
    chart.edges.push_back(std::move(e));
  }
  if (!diags.empty()) return r;
  diags = check(chart);
  if (diags.empty()) r.chart = std::move(chart);
  return r;
}

inline FlowParseResult parse_flowchart(std::string_view text)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    FlowParseResult r;
    r.diagnostics.push_back({"", std::string("malformed JSON: ") + e.what()});
    return r;
  }
  return parse_flowchart_json(doc);
}

inline Flowchart parse_flowchart_or_throw(std::string_view text)
{
  auto r = parse_flowchart(text);
  if (!r.ok()) throw FlowError("invalid flowchart:\n" + r.format_diagnostics());
  return std::move(*r.chart);
}

inline nlohmann::json to_json(const Flowchart& chart)
{
  nlohmann::json j;
  if (!chart.name.empty()) j["name"] = chart.name;
  if (!chart.source.empty()) j["source"] = chart.source;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : chart.blocks) {
    nlohmann::json jb{{"id", b.id}, {"kind", std::string(to_string(b.kind))}};
    if (b.kind == BlockKind::Process) jb["action"] = b.name;
    if (b.kind == BlockKind::Decision) jb["condition"] = b.name;
    if (b.kind == BlockKind::End) jb["outcome"] = std::string(to_string(b.outcome));
    if (!b.label.empty()) jb["label"] = b.label;
    j["blocks"].push_back(std::move(jb));
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : chart.edges) {
    nlohmann::json je{{"from", e.from}, {"to", e.to}};
    if (e.guard != Guard::None) je["guard"] = e.guard == Guard::True ? "true" : "false";
    j["edges"].push_back(std::move(je));
  }
  return j;
}

struct FlowRun {
  Status outcome = Status::Success;
  std::vector<std::string> actions;

  friend bool operator==(const FlowRun&, const FlowRun&) = default;
};

/// Walks Start to End following the guards selected by `conditions`.
inline FlowRun execute_flowchart(const Flowchart& chart, const std::map<std::string, bool, std::less<>>& conditions)
{
  require_valid(chart);
  FlowRun run;
  const FlowBlock* b = &chart.start();
  for (std::size_t steps = 0; steps <= chart.blocks.size(); ++steps) {
    switch (b->kind) {
      case BlockKind::End:
        run.outcome = b->outcome;
        return run;
      case BlockKind::Process:
        run.actions.push_back(b->name);
        [[fallthrough]];
      case BlockKind::Start:
        b = &chart.at(chart.successor(b->id, Guard::None));
        break;
      case BlockKind::Decision: {
        auto it = conditions.find(b->name);
        if (it == conditions.end()) throw FlowError("no outcome given for condition '" + b->name + "' (block '" + b->id + "')");
        b = &chart.at(chart.successor(b->id, it->second ? Guard::True : Guard::False));
        break;
      }
    }
  }
  throw FlowError("walk did not reach an end block");
}

}  // namespace medbt::flow
