#pragma once

#include "vis/nonsmooth.hpp"
#include "vis/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace vis {

/// Closed ball or box, the building blocks of unions and convex sets.
struct ConvexPiece {
  enum class Shape { Ball, Box };
  Shape shape = Shape::Ball;
  Vector center;  ///< ball
  Scalar radius = 1.0;
  Vector lower;  ///< box
  Vector upper;

  static ConvexPiece ball(Vector center, Scalar radius);
  static ConvexPiece box(Vector lower, Vector upper);
  Vector project(const Vector& p) const;
  bool contains(const Vector& x, Scalar tol) const;
};

enum class ProxRegularKind { BallComplement, UnionOfConvex, Convex };

const char* to_string(ProxRegularKind kind);

/// A closed r-prox-regular set with an exact nearest-point map on K_r.
class ProxRegularSet {
 public:
  /// {x in R^dim : |x| >= radius}; r = radius.
  static ProxRegularSet ball_complement(Eigen::Index dim, Scalar radius);
  /// Union of balls and boxes; r is declared by the caller and checked by sampling.
  static ProxRegularSet union_of_convex(std::vector<ConvexPiece> pieces, Scalar prox_constant);
  static ProxRegularSet convex(ConvexPiece piece);

  ProxRegularKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  Scalar prox_constant() const { return r_; }
  Scalar radius() const { return radius_; }
  const std::vector<ConvexPiece>& pieces() const { return pieces_; }

  bool contains(const Vector& x, Scalar tol = kFeasTol) const;
  Scalar distance(const Vector& p) const;

  /// Nearest point of K. Throws OutsideEnlargement when dist(p, K) >= r and
  /// SetValued when two members of a union tie.
  Vector project(const Vector& p) const;

  /// Points with dist(p, K) < rho drawn by rejection from a bounding region.
  Vector sample_enlargement(std::mt19937_64& rng, Scalar rho) const;
  /// Points of K from the same region.
  Vector sample_member(std::mt19937_64& rng) const;

 private:
  ProxRegularKind kind_ = ProxRegularKind::Convex;
  Eigen::Index dim_ = 0;
  Scalar r_ = kInf;
  Scalar radius_ = 1.0;
  std::vector<ConvexPiece> pieces_;
  Vector box_lo_;
  Vector box_hi_;
};

/// sup over seeded pairs in K_rho of |P p1 - P p2| / |p1 - p2|. Half of the
/// pairs are independent, half are close neighbours.
Scalar lipschitz_probe(const ProxRegularSet& set, Scalar rho, int pairs, std::uint64_t seed);

/// Rank bound r / (r - rho) (1 for convex sets).
Scalar lipschitz_rank_bound(const ProxRegularSet& set, Scalar rho);

/// min over seeded triples (xbar = P p, v = p - xbar, x in K) of
/// (|v| |x - xbar|^2 / 2 - r <v, x - xbar>) / (|v| (1 + |x - xbar|^2)).
Scalar prox_regularity_margin(const ProxRegularSet& set, Scalar rho, int triples, std::uint64_t seed);

/// min over seeded (x in K, p in K_rho) of
/// (|x - p|^2 - (1 - rho/r)|x - xbar|^2 - |p - xbar|^2) / (1 + |x - p|^2).
Scalar recast_inequality_margin(const ProxRegularSet& set, Scalar rho, int samples, std::uint64_t seed);

struct SegmentVerdict {
  std::vector<Scalar> rho_list;
  std::vector<bool> differentiable;  ///< per rho
  std::vector<std::vector<Vector>> derivatives;  ///< per rho, per direction (smallest t quotient)
  std::vector<Vector> directions;
  bool consistent = false;  ///< all per-rho verdicts agree
};

/// Difference quotients of the projection at xbar + rho v for each rho and
/// seeded directions; a rho counts as differentiable when successive quotient
/// differences over t in {1e-2, ..., 1e-5} shrink by at least 2 (or sit at
/// rounding level).
SegmentVerdict segment_differentiability_check(const ProxRegularSet& set, const Vector& xbar, const Vector& v,
                                               const std::vector<Scalar>& rho_list, std::uint64_t seed,
                                               int directions = 4);

/// Derivative of p -> R p / |p| at 0 < |p| < R in direction q.
Vector ball_complement_projection_derivative(Scalar radius, const Vector& p, const Vector& q);

/// Directional derivative P_K'(p; q) from the closed forms of the pieces
/// (nearest piece for unions). Throws SetValued on ties.
Vector projection_directional_derivative(const ProxRegularSet& set, const Vector& p, const Vector& q);

/// j = |x|^2 / 2 + indicator of K, with prox_{s j}(v) = P_K(v / (1 + s)).
NonsmoothFunctional half_square_plus_indicator(const ProxRegularSet& set);

}  // namespace vis
