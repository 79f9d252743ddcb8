#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedkl {

/// Array dimensions do not agree (policy vs. MDP, parameter lengths, ...).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A probability table, discount, or other construction-time invariant is violated.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Experiment or generator configuration is malformed.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when D^{-1} is undefined: some state has (numerically) zero visitation mass.
class UnreachableStateError : public std::runtime_error {
 public:
  UnreachableStateError(std::size_t agent, std::size_t state, double mass)
      : std::runtime_error("agent " + std::to_string(agent) + ": state " + std::to_string(state) +
                           " is unreachable (visitation mass " + std::to_string(mass) + ")"),
        agent_(agent),
        state_(state) {}

  std::size_t agent() const noexcept { return agent_; }
  std::size_t state() const noexcept { return state_; }

 private:
  std::size_t agent_;
  std::size_t state_;
};

/// A solver failed to reach its residual tolerance.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedkl
