#include "vis/proxreg.hpp"

#include <algorithm>
#include <cmath>

namespace vis {

namespace {

Vector uniform_in_box(std::mt19937_64& rng, const Vector& lo, const Vector& hi) {
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  Vector p(lo.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = lo(i) + (hi(i) - lo(i)) * u(rng);
  return p;
}

Vector gaussian(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<Scalar> nd;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

constexpr int kRejectionLimit = 1000000;

}  // namespace

ConvexPiece ConvexPiece::ball(Vector center, Scalar radius) {
  ConvexPiece c;
  c.shape = Shape::Ball;
  c.center = std::move(center);
  c.radius = radius;
  return c;
}

ConvexPiece ConvexPiece::box(Vector lower, Vector upper) {
  ConvexPiece c;
  c.shape = Shape::Box;
  c.lower = std::move(lower);
  c.upper = std::move(upper);
  return c;
}

Vector ConvexPiece::project(const Vector& p) const {
  if (shape == Shape::Box) return clamp_box(p, lower, upper);
  const Vector d = p - center;
  const Scalar n = d.norm();
  return n <= radius ? p : Vector(center + radius * d / n);
}

bool ConvexPiece::contains(const Vector& x, Scalar tol) const {
  if (shape == Shape::Box) {
    return (x.array() >= lower.array() - tol).all() && (x.array() <= upper.array() + tol).all();
  }
  return (x - center).norm() <= radius + tol;
}

const char* to_string(ProxRegularKind kind) {
  switch (kind) {
    case ProxRegularKind::BallComplement: return "ball_complement";
    case ProxRegularKind::UnionOfConvex: return "union_of_convex";
    case ProxRegularKind::Convex: return "convex";
  }
  return "unknown";
}

ProxRegularSet ProxRegularSet::ball_complement(Eigen::Index dim, Scalar radius) {
  if (dim < 1 || !(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "ball_complement: bad dimension or radius");
  ProxRegularSet s;
  s.kind_ = ProxRegularKind::BallComplement;
  s.dim_ = dim;
  s.r_ = radius;
  s.radius_ = radius;
  s.box_lo_ = Vector::Constant(dim, -radius - 1.0);
  s.box_hi_ = Vector::Constant(dim, radius + 1.0);
  return s;
}

ProxRegularSet ProxRegularSet::union_of_convex(std::vector<ConvexPiece> pieces, Scalar prox_constant) {
  if (pieces.empty()) throw Error(ErrorCode::InvalidArgument, "union_of_convex: no pieces");
  ProxRegularSet s;
  s.kind_ = ProxRegularKind::UnionOfConvex;
  s.r_ = prox_constant;
  s.dim_ = pieces.front().shape == ConvexPiece::Shape::Ball ? pieces.front().center.size()
                                                            : pieces.front().lower.size();
  s.box_lo_ = Vector::Constant(s.dim_, kInf);
  s.box_hi_ = Vector::Constant(s.dim_, -kInf);
  for (const auto& p : pieces) {
    const Vector lo = p.shape == ConvexPiece::Shape::Ball ? Vector(p.center.array() - p.radius) : p.lower;
    const Vector hi = p.shape == ConvexPiece::Shape::Ball ? Vector(p.center.array() + p.radius) : p.upper;
    if (lo.size() != s.dim_) throw Error(ErrorCode::InvalidArgument, "union_of_convex: dimension mismatch");
    s.box_lo_ = s.box_lo_.cwiseMin(lo);
    s.box_hi_ = s.box_hi_.cwiseMax(hi);
  }
  const Scalar pad = std::isfinite(prox_constant) ? std::min(prox_constant, 1.0) : 1.0;
  s.box_lo_.array() -= pad;
  s.box_hi_.array() += pad;
  s.pieces_ = std::move(pieces);
  return s;
}

ProxRegularSet ProxRegularSet::convex(ConvexPiece piece) {
  ProxRegularSet s = union_of_convex({std::move(piece)}, kInf);
  s.kind_ = ProxRegularKind::Convex;
  return s;
}

bool ProxRegularSet::contains(const Vector& x, Scalar tol) const {
  if (kind_ == ProxRegularKind::BallComplement) return x.norm() >= radius_ - tol;
  return std::any_of(pieces_.begin(), pieces_.end(), [&](const ConvexPiece& p) { return p.contains(x, tol); });
}

Scalar ProxRegularSet::distance(const Vector& p) const {
  if (kind_ == ProxRegularKind::BallComplement) return std::max<Scalar>(0.0, radius_ - p.norm());
  Scalar d = kInf;
  for (const auto& piece : pieces_) d = std::min(d, (piece.project(p) - p).norm());
  return d;
}

Vector ProxRegularSet::project(const Vector& p) const {
  if (p.size() != dim_) throw Error(ErrorCode::InvalidArgument, "project: dimension mismatch");
  if (distance(p) >= r_) throw Error(ErrorCode::OutsideEnlargement, "project: dist(p, K) >= r");
  if (kind_ == ProxRegularKind::BallComplement) {
    const Scalar n = p.norm();
    if (n >= radius_) return p;
    if (n == 0.0) throw Error(ErrorCode::SetValued, "project: every point of the sphere is nearest");
    return radius_ * p / n;
  }
  Vector best;
  Scalar best_d = kInf;
  for (const auto& piece : pieces_) {
    const Vector c = piece.project(p);
    const Scalar d = (c - p).norm();
    if (d < best_d - 1e-12) {
      best = c;
      best_d = d;
    } else if (std::abs(d - best_d) <= 1e-12 && (c - best).norm() > 1e-12) {
      throw Error(ErrorCode::SetValued, "project: two members are equally near");
    }
  }
  return best;
}

Vector ProxRegularSet::sample_enlargement(std::mt19937_64& rng, Scalar rho) const {
  for (int k = 0; k < kRejectionLimit; ++k) {
    const Vector p = uniform_in_box(rng, box_lo_, box_hi_);
    if (distance(p) < rho) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "sample_enlargement: rejection sampling failed");
}

Vector ProxRegularSet::sample_member(std::mt19937_64& rng) const {
  for (int k = 0; k < kRejectionLimit; ++k) {
    const Vector p = uniform_in_box(rng, box_lo_, box_hi_);
    if (contains(p, 0.0)) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "sample_member: rejection sampling failed");
}

Scalar lipschitz_rank_bound(const ProxRegularSet& set, Scalar rho) {
  const Scalar r = set.prox_constant();
  if (!std::isfinite(r)) return 1.0;
  return r / (r - rho);
}

Scalar lipschitz_probe(const ProxRegularSet& set, Scalar rho, int pairs, std::uint64_t seed) {
  if (!(rho < set.prox_constant())) throw Error(ErrorCode::InvalidArgument, "lipschitz_probe: rho must be < r");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  Scalar worst = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const Vector p1 = set.sample_enlargement(rng, rho);
    Vector p2;
    if (k % 2 == 0) {
      p2 = set.sample_enlargement(rng, rho);
    } else {
      const Scalar h = std::pow(10.0, -1.0 - 5.0 * u(rng));
      do {
        p2 = p1 + h * gaussian(rng, set.dim());
      } while (!(set.distance(p2) < rho));
    }
    const Scalar dp = (p1 - p2).norm();
    if (dp == 0.0) continue;
    worst = std::max(worst, (set.project(p1) - set.project(p2)).norm() / dp);
  }
  return worst;
}

Scalar prox_regularity_margin(const ProxRegularSet& set, Scalar rho, int triples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Scalar r = set.prox_constant();
  Scalar worst = kInf;
  for (int k = 0; k < triples; ++k) {
    const Vector p = set.sample_enlargement(rng, rho);
    const Vector xbar = set.project(p);
    const Vector v = p - xbar;
    const Vector x = set.sample_member(rng);
    const Vector d = x - xbar;
    const Scalar nv = v.norm();
    if (nv == 0.0) continue;
    const Scalar lhs = 0.5 * nv * d.squaredNorm();
    const Scalar margin = std::isfinite(r) ? lhs - r * v.dot(d) : -v.dot(d);
    worst = std::min(worst, margin / (nv * (1.0 + d.squaredNorm())));
  }
  return worst;
}

Scalar recast_inequality_margin(const ProxRegularSet& set, Scalar rho, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Scalar r = set.prox_constant();
  const Scalar factor = std::isfinite(r) ? 1.0 - rho / r : 1.0;
  Scalar worst = kInf;
  for (int k = 0; k < samples; ++k) {
    const Vector p = set.sample_enlargement(rng, rho);
    const Vector xbar = set.project(p);
    const Vector x = set.sample_member(rng);
    const Scalar gap = (x - p).squaredNorm() - factor * (x - xbar).squaredNorm() - (p - xbar).squaredNorm();
    worst = std::min(worst, gap / (1.0 + (x - p).squaredNorm()));
  }
  return worst;
}

SegmentVerdict segment_differentiability_check(const ProxRegularSet& set, const Vector& xbar, const Vector& v,
                                               const std::vector<Scalar>& rho_list, std::uint64_t seed,
                                               int directions) {
  SegmentVerdict out;
  out.rho_list = rho_list;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < directions; ++k) out.directions.push_back(gaussian(rng, set.dim()));
  const std::vector<Scalar> t_grid{1e-2, 1e-3, 1e-4, 1e-5};

  for (Scalar rho : rho_list) {
    const Vector p = xbar + rho * v;
    const Vector base = set.project(p);
    bool ok = true;
    std::vector<Vector> derivs;
    for (const Vector& q : out.directions) {
      std::vector<Vector> quot;
      for (Scalar t : t_grid) quot.push_back((set.project(p + t * q) - base) / t);
      const Scalar floor = 1e-9 * (1.0 + quot.back().norm());
      Scalar prev = kInf;
      for (std::size_t i = 1; i < quot.size(); ++i) {
        const Scalar diff = (quot[i] - quot[i - 1]).norm();
        if (diff > floor && diff > 0.5 * prev) ok = false;
        prev = diff;
      }
      derivs.push_back(quot.back());
    }
    out.differentiable.push_back(ok);
    out.derivatives.push_back(std::move(derivs));
  }
  out.consistent = std::adjacent_find(out.differentiable.begin(), out.differentiable.end(),
                                      std::not_equal_to<>()) == out.differentiable.end();
  return out;
}

Vector ball_complement_projection_derivative(Scalar radius, const Vector& p, const Vector& q) {
  const Scalar n = p.norm();
  const Vector e = p / n;
  return (radius / n) * (q - e.dot(q) * e);
}

namespace {

Vector piece_derivative(const ConvexPiece& piece, const Vector& p, const Vector& q) {
  if (piece.shape == ConvexPiece::Shape::Box) {
    Vector d = q;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p(i) < piece.lower(i) || p(i) > piece.upper(i)) d(i) = 0.0;
      else if (p(i) == piece.lower(i)) d(i) = std::max<Scalar>(q(i), 0.0);
      else if (p(i) == piece.upper(i)) d(i) = std::min<Scalar>(q(i), 0.0);
    }
    return d;
  }
  const Vector r = p - piece.center;
  const Scalar n = r.norm();
  if (n < piece.radius) return q;
  const Vector e = r / n;
  const Vector tangential = q - e.dot(q) * e;
  if (n > piece.radius) return (piece.radius / n) * tangential;
  return e.dot(q) <= 0.0 ? q : tangential;
}

}  // namespace

Vector projection_directional_derivative(const ProxRegularSet& set, const Vector& p, const Vector& q) {
  const Vector xbar = set.project(p);
  if (set.kind() == ProxRegularKind::BallComplement) {
    const Scalar n = p.norm();
    if (n > set.radius()) return q;
    const Vector e = p / n;
    if (n < set.radius()) return ball_complement_projection_derivative(set.radius(), p, q);
    return e.dot(q) >= 0.0 ? q : Vector(q - e.dot(q) * e);
  }
  for (const auto& piece : set.pieces()) {
    if ((piece.project(p) - xbar).norm() <= 1e-12) return piece_derivative(piece, p, q);
  }
  throw Error(ErrorCode::SetValued, "projection_directional_derivative: no nearest piece");
}

NonsmoothFunctional half_square_plus_indicator(const ProxRegularSet& set) {
  CustomFunctional c;
  c.name = std::string("half_square_plus_") + to_string(set.kind());
  c.eval = [set](const Vector& x) { return set.contains(x, kFeasTol) ? 0.5 * x.squaredNorm() : kInf; };
  c.prox = [set](const Vector& v, Scalar s) -> Vector {
    const Vector w = v / (1.0 + s);
    try {
      return set.project(w);
    } catch (const Error&) {
      if (set.kind() != ProxRegularKind::BallComplement) throw;
      Vector e = Vector::Zero(w.size());
      e(0) = set.radius();
      return e;
    }
  };
  return NonsmoothFunctional(std::move(c));
}

}  // namespace vis
