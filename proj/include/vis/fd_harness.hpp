#pragma once

#include "vis/derivative.hpp"
#include "vis/subderivative.hpp"
#include "vis/vi.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vis {

/// Difference quotients y_t = (x_t - x_0) / t along p_0 + t q.
struct FdReport {
  Vector p0;
  Vector q;
  Vector x0;
  Vector a0;  ///< -A(p_0, x_0)
  std::vector<Scalar> t_grid;
  std::vector<Vector> quotients;
  std::vector<Scalar> residuals;         ///< solver residual at each t
  std::vector<Scalar> soq_values;        ///< (j(x_t) - j(x_0) - <a_0, x_t - x_0>) / (t^2 / 2)
  std::vector<Scalar> lipschitz_ratios;  ///< |x_t - x_0| / (t |q|)
  std::vector<Scalar> taylor_remainders; ///< |A(p_0 + t q, x_t) - A(p_0, x_0) - t A_p q - t A_x y_t| / t
  std::vector<Scalar> consistency_margins;  ///< min over z of the difference-quotient VI plus slack
  // Filled by verify_convergence.
  std::vector<Scalar> errors;
  std::vector<Scalar> quadform_gaps;
};

std::vector<Scalar> default_t_grid();

struct RayOptions {
  Scalar tol = 1e-13;
  int consistency_samples = 100;
  std::uint64_t seed = 0;
};

/// Solves the VI at p_0 and at p_0 + t q for t in the grid (sorted large to
/// small, warm-started from x_0 + t y_prev). Solver failures are rethrown with
/// the offending t in the message.
FdReport run_ray(const ViProblem& problem, const Vector& p0, const Vector& q, std::vector<Scalar> t_grid,
                 const RayOptions& opts = {});

struct ConvergenceOptions {
  Scalar tol_conv = 1e-6;
  Scalar tol_soq = 1e-4;
};

struct ConvergenceVerdict {
  bool errors_decreasing = false;
  bool final_error_ok = false;
  bool soq_ok = false;
  bool quadform_ok = false;
  bool consistency_ok = false;
  Scalar final_error = 0.0;
  Scalar extrapolated_error = 0.0;
  Scalar soq_extrapolated = 0.0;
  Scalar q_value = 0.0;
  std::optional<Scalar> fitted_rate;  ///< empty when every error is at rounding level
  bool pass() const { return errors_decreasing && final_error_ok && soq_ok && quadform_ok && consistency_ok; }
};

/// Compares a ray against a derivative y: errors, second-order quotient limit
/// against Q(y), and <A_x y_t, y_t> -> <A_x y, y>. Fills report.errors and
/// report.quadform_gaps.
ConvergenceVerdict verify_convergence(FdReport& report, const Vector& y, const QuadraticSubderivative& Q,
                                      const Matrix& Ax, const ConvergenceOptions& opts = {});

/// Richardson extrapolation to t = 0 from the two smallest grid points,
/// assuming v(t) = v(0) + O(t).
Scalar richardson_limit(const std::vector<Scalar>& t, const std::vector<Scalar>& v);

/// Least-squares slope of log(error) against log(t) over errors above floor.
std::optional<Scalar> fit_rate(const std::vector<Scalar>& t, const std::vector<Scalar>& errors, Scalar floor);

/// Flat CSV with columns t,error,soq,lipschitz_ratio,quadform_gap.
std::string fd_report_csv(const FdReport& report);

}  // namespace vis
