#pragma once

#include <map>
#include <string>
#include <string_view>

#include "medbt/value.hpp"

namespace medbt {

/// Shared typed key-value store read and written by leaves.
///
/// Reading an absent key throws; writes are last-write-wins. Trace recording
/// of writes happens in the engine, which routes every run-time write
/// through Engine::write.
class Blackboard {
 public:
  Blackboard() = default;
  Blackboard(std::initializer_list<std::pair<const std::string, Value>> init) : entries_(init) {}

  bool contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

  const Value& get(std::string_view key) const
  {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw BlackboardError("blackboard key '" + std::string(key) + "' is not set");
    return it->second;
  }

  template <typename T>
  const T& get_as(std::string_view key) const
  {
    const Value& v = get(key);
    if (const T* p = std::get_if<T>(&v)) return *p;
    throw BlackboardError("blackboard key '" + std::string(key) + "' holds " + std::string(type_name(v)));
  }

  void set(std::string key, Value value) { entries_.insert_or_assign(std::move(key), std::move(value)); }

  const std::map<std::string, Value, std::less<>>& entries() const noexcept { return entries_; }

  friend bool operator==(const Blackboard&, const Blackboard&) = default;

  nlohmann::json to_json() const
  {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : entries_) out[k] = to_json_value(v);
    return out;
  }

  static Blackboard from_json(const nlohmann::json& j)
  {
    if (!j.is_object()) throw BlackboardError("blackboard must be a JSON object");
    Blackboard bb;
    for (const auto& [k, v] : j.items()) bb.set(k, from_json_value(v));
    return bb;
  }

 private:
  std::map<std::string, Value, std::less<>> entries_;
};

}  // namespace medbt
