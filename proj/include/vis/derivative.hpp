#pragma once

#include "vis/subderivative.hpp"
#include "vis/types.hpp"

#include <cstdint>

namespace vis {

/// Solution of the derivative VI
///   y in K,  <A_p q + A_x y, z - y> + Q(z)/2 - Q(y)/2 >= 0  for all z in K.
struct DerivativeSolution {
  Vector q;
  Vector y;
  Scalar q_value = 0.0;
  Scalar vi_residual = 0.0;
  Scalar value_identity_gap = 0.0;  ///< |Q(y) + <A_p q + A_x y, y>|
  Scalar coercivity = 0.0;          ///< c on the span of the cone
  Scalar epsilon = 0.0;             ///< c / (2 |A_x|)
  Scalar contraction = 0.0;         ///< rate of the lagged splitting
  int iterations = 0;
};

struct DerivativeOptions {
  Scalar tol = kDefaultTol;
  int max_iters = 10000;
  Vector y0;  ///< start of the splitting; empty means zero
};

/// Symmetric A_x: one QP over the cone. Nonsymmetric A_x: the monotone
/// subproblem with S = sym(A_x) + W is solved repeatedly with the skew part
/// lagged and the step relaxed by 1 + nu^2, nu = |S^{-1/2} skew(A_x) S^{-1/2}|,
/// which contracts in the S-norm with factor nu / sqrt(1 + nu^2). The limit is
/// polished on its active face.
///
/// Throws NotCoercive when A_x + W is not positive definite on the cone span
/// and NonConvergence when the splitting stalls.
DerivativeSolution solve_derivative_vi(const Matrix& Ap, const Matrix& Ax, const QuadraticSubderivative& Q,
                                       const Vector& q, const DerivativeOptions& opts = {});

/// Natural-map defect |y - P_K(y - s (b + (A_x + W) y))| with s = 1 / max(1, |A_x + W|).
Scalar derivative_vi_residual(const Matrix& Ap, const Matrix& Ax, const QuadraticSubderivative& Q,
                              const Vector& q, const Vector& y);

struct NecessaryConditionReport {
  Scalar min_linearized_vi = 0.0;  ///< min over samples of the derivative-VI expression
  Scalar value_identity_gap = 0.0;
  bool y_in_cone = false;
  int samples = 0;
};

/// Evaluates the derivative-VI inequality at seeded cone points (rays through
/// y, projections of random vectors, points near y) and the value identity.
NecessaryConditionReport check_necessary_conditions(const DerivativeSolution& sol,
                                                    const QuadraticSubderivative& Q, const Matrix& Ap,
                                                    const Matrix& Ax, std::uint64_t seed = 0,
                                                    int samples = 1000);

}  // namespace vis
