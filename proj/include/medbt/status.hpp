#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace medbt {

/// Result of ticking a node. Leaves bound to completed behaviors only ever
/// produce Success or Failure; Running means "still in flight".
enum class Status { Success, Failure, Running };

constexpr std::string_view to_string(Status s) noexcept
{
  switch (s) {
    case Status::Success: return "success";
    case Status::Failure: return "failure";
    case Status::Running: return "running";
  }
  return "?";
}

inline std::optional<Status> parse_status(std::string_view text)
{
  if (text == "success" || text == "S" || text == "s") return Status::Success;
  if (text == "failure" || text == "F" || text == "f") return Status::Failure;
  if (text == "running") return Status::Running;
  return std::nullopt;
}

constexpr bool is_terminal(Status s) noexcept { return s != Status::Running; }

/// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TreeError : public Error {
 public:
  using Error::Error;
};

class BlackboardError : public Error {
 public:
  using Error::Error;
};

class BindingError : public Error {
 public:
  using Error::Error;
};

}  // namespace medbt
