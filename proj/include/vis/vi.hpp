#pragma once

#include "vis/nonsmooth.hpp"
#include "vis/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>

namespace vis {

using OperatorFn = std::function<Vector(const Vector& p, const Vector& x)>;
using JacobianFn = std::function<Matrix(const Vector& p, const Vector& x)>;

/// Finite-dimensional parametrized VI
///
///   find x:  <A(p, x), z - x> + j(z) - j(x) >= 0   for all z.
struct ViProblem {
  Eigen::Index dim_x = 0;
  Eigen::Index dim_p = 0;
  OperatorFn op;
  JacobianFn jac_x;
  JacobianFn jac_p;
  NonsmoothFunctional nonsmooth;
  /// Lower bound c in <A(p,x1) - A(p,x2), x1 - x2> >= c |x1 - x2|^2.
  Scalar monotonicity = 0.0;
};

/// A(p, x) = M x + kappa * tanh(x) + offset - B p.
/// Strongly monotone with constant lambda_min(sym M) when kappa >= 0.
ViProblem make_affine_tanh_problem(Matrix M, Matrix B, Vector offset, Scalar kappa,
                                   NonsmoothFunctional j);

struct ViSolution {
  Vector x_bar;
  Scalar residual = 0.0;
  int iterations = 0;
  Scalar sigma = 1.0;  ///< step used in the natural map
  std::map<std::string, Vector> multipliers;
};

struct ViSolverOptions {
  Scalar tol = kDefaultTol;
  int max_iters = kDefaultMaxIters;
  Scalar sigma = 0.0;           ///< 0: derive c / L_A^2
  bool semismooth = true;       ///< Newton on the natural map
  std::uint64_t seed = 12345;   ///< for the Lipschitz estimate of A
};

/// Natural-map defect |x - prox_{sigma j}(x - sigma A(p, x))|.
Scalar vi_residual(const ViProblem& problem, const Vector& p, const Vector& x, Scalar sigma = 1.0);

/// Sampled estimate of the Lipschitz constant of x -> A(p, x) near x.
Scalar estimate_operator_lipschitz(const ViProblem& problem, const Vector& p, const Vector& x,
                                   std::uint64_t seed, int samples = 32);

/// Projected fixed point x <- prox_{sigma j}(x - sigma A(p, x)), sigma = c / L_A^2,
/// interleaved with semismooth Newton steps on the natural map.
ViSolution solve_elliptic_vi(const ViProblem& problem, const Vector& p, const Vector& x0,
                             const ViSolverOptions& opts = {});

/// Largest relative deviation of jac_x / jac_p from central differences of op.
Scalar jacobian_self_check(const ViProblem& problem, const Vector& p, const Vector& x,
                           Scalar h = 1e-6);

/// Smallest sampled ratio <A(p,x1)-A(p,x2), x1-x2> / |x1-x2|^2 around x.
Scalar sampled_monotonicity(const ViProblem& problem, const Vector& p, const Vector& x,
                            std::uint64_t seed, int samples = 200, Scalar radius = 1.0);

}  // namespace vis
