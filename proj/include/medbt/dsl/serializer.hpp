#pragma once

#include <string>

#include "medbt/validate.hpp"

namespace medbt::dsl {

inline std::string quote(std::string_view s)
{
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

inline std::string comment_line(const std::string& c)
{
  if (c == "#" || c.rfind("# ", 0) == 0 || c.rfind("##", 0) == 0) return c;
  return "# " + c;
}

inline std::string format_literal(const Value& v)
{
  return std::visit(
    [](const auto& x) -> std::string {
      using T = std::decay_t<decltype(x)>;
      if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
      else if constexpr (std::is_same_v<T, double>) return format_number(x);
      else if constexpr (std::is_same_v<T, std::string>) return quote(x);
      else if constexpr (std::is_same_v<T, Duration>) return format_duration(x);
      else throw TreeError("timestamp literals have no textual form");
    },
    v);
}

inline std::string format_predicate(const Predicate& p)
{
  return p.key + " " + std::string(to_string(p.op)) + " " + format_literal(p.literal);
}

/// Canonical text: header comments, meta lines, then one node per line with
/// two-space indentation. Ids are written only where they differ from the
/// preorder id the parser would assign.
inline std::string serialize(const BehaviorTree& tree)
{
  require_valid(tree);
  std::string out;
  for (const auto& c : tree.metadata.header_comments) out += comment_line(c) + "\n";
  if (!tree.metadata.name.empty()) out += "meta name " + quote(tree.metadata.name) + "\n";
  if (!tree.metadata.version.empty()) out += "meta version " + quote(tree.metadata.version) + "\n";
  if (!tree.metadata.source.empty()) out += "meta source " + quote(tree.metadata.source) + "\n";

  std::size_t index = 0;
  for_each_preorder(tree, [&](const Node& n, std::size_t depth) {
    const std::string indent(depth * 2, ' ');
    for (const auto& c : n.comments) out += indent + comment_line(c) + "\n";
    std::string line = indent + std::string(kind_name(n.kind));
    std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kind::Parallel>) {
          line += " " + std::to_string(k.threshold);
        } else if constexpr (std::is_same_v<T, kind::Decorator>) {
          if (auto* r = std::get_if<policy::RetryLimit>(&k.policy)) line += " " + std::to_string(r->max_attempts);
          if (auto* p = std::get_if<policy::PeriodicTimer>(&k.policy)) line += " " + p->period_key;
          if (auto* r = std::get_if<policy::RepeatUntil>(&k.policy)) {
            line += " " + format_predicate(r->condition);
            if (r->max_iterations != policy::RepeatUntil::kDefaultMaxIterations) {
              line += " max " + std::to_string(r->max_iterations);
            }
          }
        } else if constexpr (std::is_same_v<T, kind::Action> || std::is_same_v<T, kind::Query>) {
          line += " " + k.name;
        }
      },
      n.kind);
    if (n.id != auto_id(index)) line += " #" + n.id;
    if (!n.label.empty()) line += " " + quote(n.label);
    if (n.approx) line += " approx";
    if (auto* a = std::get_if<kind::Action>(&n.kind)) {
      for (const auto& e : a->effects) line += " set " + e.key + " = " + format_literal(e.value);
    }
    if (auto* q = std::get_if<kind::Query>(&n.kind); q && q->condition) {
      line += " when " + format_predicate(*q->condition);
    }
    out += line + "\n";
    ++index;
  });
  for (const auto& c : tree.metadata.trailing_comments) out += comment_line(c) + "\n";
  return out;
}

}  // namespace medbt::dsl
