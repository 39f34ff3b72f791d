#pragma once

#include <map>
#include <string>

#include "medbt/validate.hpp"

namespace medbt {

/// Reference evaluator: direct recursion on the textbook definitions over
/// completed leaf outcomes, without memory, Running, decorators or recovery.
/// Used as an oracle for the tick engine.
inline Status evaluate_definitional(const BehaviorTree& tree, const std::map<std::string, Status, std::less<>>& outcomes)
{
  require_valid(tree);
  std::function<Status(const Node&)> eval = [&](const Node& n) -> Status {
    return std::visit(
      [&](const auto& k) -> Status {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kind::Root>) {
          return eval(tree.at(n.children.front()));
        } else if constexpr (std::is_same_v<T, kind::Sequence>) {
          for (const auto& c : n.children) {
            if (eval(tree.at(c)) == Status::Failure) return Status::Failure;
          }
          return Status::Success;
        } else if constexpr (std::is_same_v<T, kind::Selector>) {
          for (const auto& c : n.children) {
            if (eval(tree.at(c)) == Status::Success) return Status::Success;
          }
          return Status::Failure;
        } else if constexpr (std::is_same_v<T, kind::Parallel>) {
          std::size_t succeeded = 0;
          for (const auto& c : n.children) {
            if (eval(tree.at(c)) == Status::Success) ++succeeded;
          }
          return succeeded >= k.threshold ? Status::Success : Status::Failure;
        } else if constexpr (std::is_same_v<T, kind::Action> || std::is_same_v<T, kind::Query>) {
          if (k.name == kAlwaysSuccess) return Status::Success;
          if (k.name == kAlwaysFailure) return Status::Failure;
          auto it = outcomes.find(k.name);
          if (it == outcomes.end()) throw BindingError("no outcome given for leaf '" + k.name + "'");
          if (it->second == Status::Running) throw BindingError("definitional outcomes must be success or failure");
          return it->second;
        } else {
          throw TreeError("definitional evaluation does not support " + std::string(kind_name(n.kind)) + " nodes");
        }
      },
      n.kind);
  };
  return eval(tree.root());
}

}  // namespace medbt
