#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace vis {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

/// Threshold for deciding activity (|D sigma_i| = 1, g_i = 0, ...).
inline constexpr Scalar kActiveTol = 1e-9;
/// Slack allowed when evaluating indicator functions of closed sets.
inline constexpr Scalar kFeasTol = 1e-12;
inline constexpr Scalar kDefaultTol = 1e-10;
inline constexpr int kDefaultMaxIters = 100000;

enum class ErrorCode {
  NonConvergence,
  InvalidStep,
  Infeasible,
  NotNormal,
  NotCoercive,
  InvalidInstance,
  OutsideEnlargement,
  SetValued,
  NewtonDiverged,
  SwitchCollision,
  DegenerateSlope,
  InvalidArgument,
  ConfigError,
};

const char* to_string(ErrorCode code);

/// Single exception type for all numerical failures; `code()` is machine readable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vis
