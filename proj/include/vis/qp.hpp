#pragma once

#include "vis/types.hpp"

#include <vector>

namespace vis {

/// Strictly convex dense QP
///
///   minimize   0.5 x'Hx + f'x
///   subject to E x  = e
///              G x <= h
///
/// H must be symmetric positive definite. Either constraint block may have
/// zero rows.
struct QuadraticProgram {
  Matrix H;
  Vector f;
  Matrix E;
  Vector e;
  Matrix G;
  Vector h;

  Eigen::Index dim() const { return H.rows(); }
};

struct QpResult {
  Vector x;
  /// KKT multipliers with H x + f + E'lambda + G'nu = 0, nu >= 0.
  Vector lambda;
  Vector nu;
  std::vector<Eigen::Index> active;  ///< active inequality rows
  int iterations = 0;
};

/// Goldfarb-Idnani dual active-set method. The reduced operators are rebuilt
/// from a Cholesky factor of H at every step, which is fine for the small
/// dense problems in this library (a few hundred unknowns at most).
///
/// Throws Error(Infeasible) when the constraints admit no point and
/// Error(NotCoercive) when H is not positive definite.
QpResult solve_qp(const QuadraticProgram& qp, int max_iters = 10000);

/// Euclidean projection onto {x : E x = e, G x <= h}.
Vector project_polyhedron(const Vector& v, const Matrix& E, const Vector& e, const Matrix& G,
                          const Vector& h);

/// Orthonormal basis of the null space of M (columns). Handles M with zero rows.
Matrix null_space(const Matrix& M, Eigen::Index cols, Scalar rel_tol = 1e-12);

}  // namespace vis
