#pragma once

#include <string>
#include <string_view>

#include "medbt/blackboard.hpp"

namespace medbt {

enum class CompareOp { Less, LessEqual, Greater, GreaterEqual, Equal, NotEqual };

constexpr std::string_view to_string(CompareOp op) noexcept
{
  switch (op) {
    case CompareOp::Less: return "<";
    case CompareOp::LessEqual: return "<=";
    case CompareOp::Greater: return ">";
    case CompareOp::GreaterEqual: return ">=";
    case CompareOp::Equal: return "==";
    case CompareOp::NotEqual: return "!=";
  }
  return "?";
}

inline std::optional<CompareOp> parse_compare_op(std::string_view s)
{
  if (s == "<") return CompareOp::Less;
  if (s == "<=") return CompareOp::LessEqual;
  if (s == ">") return CompareOp::Greater;
  if (s == ">=") return CompareOp::GreaterEqual;
  if (s == "==") return CompareOp::Equal;
  if (s == "!=") return CompareOp::NotEqual;
  return std::nullopt;
}

/// `key op literal` over the blackboard, e.g. `SpO2 <= 93`.
struct Predicate {
  std::string key;
  CompareOp op = CompareOp::Equal;
  Value literal;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

/// `key = literal` write performed by an action leaf when it succeeds.
struct Assignment {
  std::string key;
  Value value;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

namespace detail {

template <typename T>
bool compare_ordered(const T& a, CompareOp op, const T& b)
{
  switch (op) {
    case CompareOp::Less: return a < b;
    case CompareOp::LessEqual: return a <= b;
    case CompareOp::Greater: return a > b;
    case CompareOp::GreaterEqual: return a >= b;
    case CompareOp::Equal: return a == b;
    case CompareOp::NotEqual: return a != b;
  }
  return false;
}

}  // namespace detail

/// Type mismatches throw rather than evaluating to false.
inline bool evaluate(const Predicate& p, const Blackboard& bb)
{
  const Value& actual = bb.get(p.key);
  if (actual.index() != p.literal.index()) {
    throw BlackboardError("predicate '" + p.key + " " + std::string(to_string(p.op)) + " " + to_display(p.literal) +
                          "' compares " + std::string(type_name(actual)) + " with " +
                          std::string(type_name(p.literal)));
  }
  return std::visit(
    [&](const auto& a) -> bool {
      using T = std::decay_t<decltype(a)>;
      const T& b = std::get<T>(p.literal);
      if constexpr (std::is_same_v<T, bool>) {
        if (p.op == CompareOp::Equal) return a == b;
        if (p.op == CompareOp::NotEqual) return a != b;
        throw BlackboardError("booleans only support == and != (key '" + p.key + "')");
      } else {
        return detail::compare_ordered(a, p.op, b);
      }
    },
    actual);
}

inline std::string to_string(const Predicate& p)
{
  return p.key + " " + std::string(to_string(p.op)) + " " + to_display(p.literal);
}

}  // namespace medbt
