// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <utility>

namespace stochimp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Runtime error carrying a stable machine-readable code. The CLI turns the
/// code into structured error output and an exit status class.
///
/// Codes in use:
///   E_SCHEMA         malformed or out-of-range configuration
///   E_PRECONDITION   invalid argument to a library operation
///   E_GRID_ALIGN     a requested time does not sit on the step grid
///   E_NOISE_BOUND    noise coefficient too large for the step size
///   E_WINDOW         control class incompatible with the time window
///   E_EPSILON_RANGE  target radius below the supported conditioning range
///   E_NON_OBSERVABLE observation region cannot certify the requested bound
///   E_NO_CONVERGENCE an iterative solve exhausted its budget
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace stochimp
