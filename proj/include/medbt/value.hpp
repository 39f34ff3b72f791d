#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>

#include <json.hpp>

#include "medbt/status.hpp"

namespace medbt {

/// Span of virtual time, whole seconds.
struct Duration {
  std::int64_t seconds = 0;
  friend constexpr auto operator<=>(Duration, Duration) = default;
};

/// Point in virtual time, seconds since run start.
struct Timestamp {
  std::int64_t seconds = 0;
  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;
};

constexpr Timestamp operator+(Timestamp t, Duration d) noexcept { return {t.seconds + d.seconds}; }
constexpr Duration operator-(Timestamp a, Timestamp b) noexcept { return {a.seconds - b.seconds}; }

namespace literals {
constexpr Duration operator""_s(unsigned long long v) { return {static_cast<std::int64_t>(v)}; }
constexpr Duration operator""_min(unsigned long long v) { return {static_cast<std::int64_t>(v) * 60}; }
constexpr Duration operator""_h(unsigned long long v) { return {static_cast<std::int64_t>(v) * 3600}; }
constexpr Duration operator""_d(unsigned long long v) { return {static_cast<std::int64_t>(v) * 86400}; }
}  // namespace literals

/// Typed blackboard value.
using Value = std::variant<bool, double, std::string, Duration, Timestamp>;

inline std::string_view type_name(const Value& v)
{
  switch (v.index()) {
    case 0: return "boolean";
    case 1: return "number";
    case 2: return "text";
    case 3: return "duration";
    case 4: return "timestamp";
  }
  return "?";
}

/// Parses `2h`, `30m`, `15s`, `1d` (optionally negative) into seconds.
inline std::optional<Duration> parse_duration(std::string_view text)
{
  if (text.size() < 2) return std::nullopt;
  std::int64_t unit = 0;
  switch (text.back()) {
    case 's': unit = 1; break;
    case 'm': unit = 60; break;
    case 'h': unit = 3600; break;
    case 'd': unit = 86400; break;
    default: return std::nullopt;
  }
  std::string_view digits = text.substr(0, text.size() - 1);
  bool negative = false;
  if (!digits.empty() && digits.front() == '-') {
    negative = true;
    digits.remove_prefix(1);
  }
  if (digits.empty()) return std::nullopt;
  std::int64_t count = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), count);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return Duration{(negative ? -count : count) * unit};
}

/// Canonical spelling: the largest unit that divides the value exactly.
inline std::string format_duration(Duration d)
{
  const std::int64_t s = d.seconds;
  if (s != 0 && s % 86400 == 0) return std::to_string(s / 86400) + "d";
  if (s != 0 && s % 3600 == 0) return std::to_string(s / 3600) + "h";
  if (s != 0 && s % 60 == 0) return std::to_string(s / 60) + "m";
  return std::to_string(s) + "s";
}

/// Shortest representation that round-trips through parse_number.
inline std::string format_number(double v)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::optional<double> parse_number(std::string_view text)
{
  if (text.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Human-readable form used in diagnostics and DOT labels.
inline std::string to_display(const Value& v)
{
  return std::visit(
    [](const auto& x) -> std::string {
      using T = std::decay_t<decltype(x)>;
      if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
      else if constexpr (std::is_same_v<T, double>) return format_number(x);
      else if constexpr (std::is_same_v<T, std::string>) return x;
      else if constexpr (std::is_same_v<T, Duration>) return format_duration(x);
      else return "@" + std::to_string(x.seconds) + "s";
    },
    v);
}

// JSON encoding: booleans, numbers and text map to their JSON kinds;
// durations and timestamps are tagged objects ({"duration": 7200}).
inline nlohmann::json to_json_value(const Value& v)
{
  return std::visit(
    [](const auto& x) -> nlohmann::json {
      using T = std::decay_t<decltype(x)>;
      if constexpr (std::is_same_v<T, Duration>) return {{"duration", x.seconds}};
      else if constexpr (std::is_same_v<T, Timestamp>) return {{"timestamp", x.seconds}};
      else return x;
    },
    v);
}

/// Seconds from either a JSON number or a duration literal string.
inline std::optional<std::int64_t> json_seconds(const nlohmann::json& j)
{
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) {
    const double d = j.get<double>();
    if (std::floor(d) != d) return std::nullopt;
    return static_cast<std::int64_t>(d);
  }
  if (j.is_string()) {
    if (auto d = parse_duration(j.get<std::string>())) return d->seconds;
  }
  return std::nullopt;
}

inline Value from_json_value(const nlohmann::json& j)
{
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object() && j.size() == 1) {
    if (j.contains("duration")) {
      if (auto s = json_seconds(j["duration"])) return Duration{*s};
    }
    if (j.contains("timestamp")) {
      if (auto s = json_seconds(j["timestamp"])) return Timestamp{*s};
    }
  }
  throw BlackboardError("unsupported blackboard value: " + j.dump());
}

}  // namespace medbt
