#pragma once

#include <stdexcept>
#include <string>

namespace qcd {

// Bad user input: parameters out of range, malformed configs, inconsistent
// table files.  The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical routine failed to reach its tolerance (value iteration,
// quadrature, stationary-distribution solve).  Carries the tolerance that
// was actually achieved so callers can report it.  CLI exit code 3.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : std::runtime_error(what + " (achieved " + std::to_string(achieved) + ")"),
        achieved_tol(achieved) {}
  double achieved_tol;
};

// A simulated trajectory exceeded the per-trial step cap, or too many
// trajectories did so in one batch.  CLI exit code 4.
class StepCapError : public std::runtime_error {
 public:
  explicit StepCapError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qcd
