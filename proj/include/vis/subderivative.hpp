#pragma once

#include "vis/cone.hpp"
#include "vis/nonsmooth.hpp"

#include <cstdint>

#include <vector>

namespace vis {

struct PlasticityInstance;

/// Second subderivative of j at x for slope g, restricted to the quadratic
/// forms that appear in this library: Q(z) = z'Wz on a polyhedral cone
/// (the reduced critical cone), +inf off the cone.
struct QuadraticSubderivative {
  ConeSpec cone;
  Matrix W;  ///< symmetric; Q(z) = z'Wz on the cone
  Vector base_point;
  Vector slope;

  Eigen::Index dim() const { return W.rows(); }
  /// +inf outside the cone (membership checked to kActiveTol).
  Scalar quad(const Vector& z) const;
  /// Value of the quadratic form without the cone test.
  Scalar form(const Vector& z) const { return z.dot(W * z); }
  Scalar bilinear(const Vector& z1, const Vector& z2) const { return z1.dot(W * z2); }
};

/// Indicator of a polyhedron {G x <= h}: Q = 0 on T_K(x) cap g-perp.
/// Throws NotNormal if g is not in the normal cone at x (or x not in K).
QuadraticSubderivative q_polyhedric(const Polyhedron& set, const Vector& x, const Vector& g);
Polyhedron box_as_polyhedron(const BoxSet& box);

/// Weighted one norm: polyhedral, Q = 0 on the critical cone.
QuadraticSubderivative q_one_norm(const WeightedOneNorm& j, const Vector& x, const Vector& g);

/// Indicator of {|D x_i| <= 1}: Q(z) = sum_i mu_i lambda_i |D z_i|^2 where
/// g_i = lambda_i D'D x_i. With unit weights this is the Euclidean catalog entry.
QuadraticSubderivative q_pointwise_ball(const PointwiseBall& set, const Vector& x, const Vector& g,
                                        const Vector& cell_weights = Vector());

/// Per-cell multipliers lambda_i = <g_i, D'D x_i> / |D'D x_i|^2 on active cells.
Vector pointwise_ball_multipliers(const PointwiseBall& set, const Vector& x, const Vector& g);

/// Stress-constraint set of an elastoplastic instance at sigma for the normal
/// xi (pointwise Riesz representative, xi_i = lambda_i D'D sigma_i).
QuadraticSubderivative q_elastoplastic(const PlasticityInstance& inst, const Vector& sigma,
                                       const Vector& xi);

/// Indicator of {|x| >= R} at a boundary point: Q(z) = -alpha |z|^2 on x-perp
/// for g = -alpha x.
QuadraticSubderivative q_ball_complement(const BallComplement& set, const Vector& x, const Vector& g);

/// Q'(z) = |z|^2 + Q(z): second subderivative of 0.5|.|^2 + delta_K at x for
/// p0 given that of delta_K at x for p0 - x.
QuadraticSubderivative q_prox_regular_shift(const QuadraticSubderivative& q_delta);

/// Dispatch on the built-in kinds. Custom functionals throw InvalidArgument.
QuadraticSubderivative catalog_subderivative(const NonsmoothFunctional& j, const Vector& x,
                                             const Vector& g);

struct OracleOptions {
  std::vector<Scalar> t_grid{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  Scalar neighborhood_radius = 1.0;
  int samples = 4096;
  Scalar infinity_threshold = 1e6;
};

/// Direct numerical evaluation of the second subderivative
///   inf liminf (j(x + t z') - j(x) - t<g, z'>) / (t^2/2),  t -> 0, z' -> z.
/// For each t the quotient plus the penalty |z' - z|^2 / (R^2 t) is minimized,
/// exactly through prox_{j/kappa} and over quasi-random points of the ball of
/// radius R sqrt(t); the per-t minima are Richardson-extrapolated to t = 0.
/// Returns +inf when the quotient diverges.
Scalar q_bruteforce_oracle(const NonsmoothFunctional& j, const Vector& x, const Vector& g,
                           const Vector& z, const OracleOptions& opts = {});

/// Halton point in [0,1)^d (index >= 1).
Vector halton_point(std::uint64_t index, Eigen::Index d);

}  // namespace vis
