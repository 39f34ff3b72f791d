#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "medbt/value.hpp"

namespace medbt {

enum class TraceKind { NodeEntered, NodeReturned, BlackboardWrite, Halted, EventApplied };

constexpr std::string_view to_string(TraceKind k) noexcept
{
  switch (k) {
    case TraceKind::NodeEntered: return "entered";
    case TraceKind::NodeReturned: return "returned";
    case TraceKind::BlackboardWrite: return "write";
    case TraceKind::Halted: return "halted";
    case TraceKind::EventApplied: return "event";
  }
  return "?";
}

inline std::optional<TraceKind> parse_trace_kind(std::string_view s)
{
  if (s == "entered") return TraceKind::NodeEntered;
  if (s == "returned") return TraceKind::NodeReturned;
  if (s == "write") return TraceKind::BlackboardWrite;
  if (s == "halted") return TraceKind::Halted;
  if (s == "event") return TraceKind::EventApplied;
  return std::nullopt;
}

/// One trace record. `subject` is a node id for node events and a
/// blackboard key for writes and applied events; `leaf` carries the leaf
/// name for Action/Query nodes.
struct TraceEvent {
  Timestamp time;
  TraceKind kind = TraceKind::NodeEntered;
  std::string subject;
  std::string leaf;
  std::optional<Status> status;
  std::optional<Value> value;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;

  bool is_node_event() const
  {
    return kind == TraceKind::NodeEntered || kind == TraceKind::NodeReturned || kind == TraceKind::Halted;
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["t"] = time.seconds;
    j["kind"] = std::string(to_string(kind));
    if (is_node_event()) j["node"] = subject;
    else j["key"] = subject;
    if (!leaf.empty()) j["leaf"] = leaf;
    if (status) j["status"] = std::string(to_string(*status));
    if (value) j["value"] = to_json_value(*value);
    return j;
  }

  static TraceEvent from_json(const nlohmann::json& j)
  {
    TraceEvent e;
    e.time = Timestamp{j.at("t").get<std::int64_t>()};
    auto k = parse_trace_kind(j.at("kind").get<std::string>());
    if (!k) throw Error("unknown trace event kind: " + j.at("kind").dump());
    e.kind = *k;
    e.subject = e.is_node_event() ? j.at("node").get<std::string>() : j.at("key").get<std::string>();
    if (j.contains("leaf")) e.leaf = j["leaf"].get<std::string>();
    if (j.contains("status")) e.status = parse_status(j["status"].get<std::string>());
    if (j.contains("value")) e.value = from_json_value(j["value"]);
    return e;
  }
};

/// Ordered event log of a run.
class ExecutionTrace {
 public:
  void push(TraceEvent e) { events_.push_back(std::move(e)); }
  const std::vector<TraceEvent>& events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  void clear() { events_.clear(); }

  friend bool operator==(const ExecutionTrace&, const ExecutionTrace&) = default;

  /// JSON lines, one record per event.
  void write_jsonl(std::ostream& os) const
  {
    for (const auto& e : events_) os << e.to_json().dump() << '\n';
  }

  std::string to_jsonl() const
  {
    std::ostringstream os;
    write_jsonl(os);
    return os.str();
  }

  static ExecutionTrace read_jsonl(std::istream& is)
  {
    ExecutionTrace t;
    std::string line;
    while (std::getline(is, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      t.push(TraceEvent::from_json(nlohmann::json::parse(line)));
    }
    return t;
  }

  /// Latest node status per node id: running while entered and not yet
  /// returned; halted nodes report no status.
  std::map<std::string, Status> latest_statuses() const
  {
    std::map<std::string, Status> out;
    for (const auto& e : events_) {
      if (e.kind == TraceKind::NodeEntered) out[e.subject] = Status::Running;
      else if (e.kind == TraceKind::NodeReturned && e.status) out[e.subject] = *e.status;
      else if (e.kind == TraceKind::Halted) out.erase(e.subject);
    }
    return out;
  }

 private:
  std::vector<TraceEvent> events_;
};

}  // namespace medbt
