#include "vis/subderivative.hpp"

#include "vis/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

namespace vis {

namespace {

constexpr Scalar kParallelTol = 1e-7;

Matrix stack_rows(const std::vector<Vector>& rows, Eigen::Index dim) {
  Matrix M(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) M.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return M;
}

Vector unit_row(Eigen::Index dim, Eigen::Index i, Scalar sign) {
  Vector r = Vector::Zero(dim);
  r(i) = sign;
  return r;
}

QuadraticSubderivative make_q(ConeSpec cone, Matrix W, const Vector& x, const Vector& g) {
  QuadraticSubderivative q{std::move(cone), std::move(W), x, g};
  return q;
}

void require_same_size(const Vector& x, const Vector& g, const char* who) {
  if (x.size() != g.size()) throw Error(ErrorCode::InvalidArgument, std::string(who) + ": x/g size mismatch");
}

}  // namespace

Scalar QuadraticSubderivative::quad(const Vector& z) const {
  if (!cone.contains(z, kActiveTol)) return kInf;
  return form(z);
}

Polyhedron box_as_polyhedron(const BoxSet& box) {
  const Eigen::Index n = box.lower.size();
  std::vector<Vector> rows;
  std::vector<Scalar> rhs;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(box.upper(i))) {
      rows.push_back(unit_row(n, i, 1.0));
      rhs.push_back(box.upper(i));
    }
    if (std::isfinite(box.lower(i))) {
      rows.push_back(unit_row(n, i, -1.0));
      rhs.push_back(-box.lower(i));
    }
  }
  Polyhedron P{stack_rows(rows, n), Eigen::Map<Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()))};
  return P;
}

QuadraticSubderivative q_polyhedric(const Polyhedron& set, const Vector& x, const Vector& g) {
  require_same_size(x, g, "q_polyhedric");
  const Eigen::Index n = x.size();
  const Vector slack = set.h - set.G * x;
  std::vector<Vector> active;
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    const Scalar scale = kActiveTol * (1.0 + std::abs(set.h(i)) + set.G.row(i).norm() * x.norm());
    if (slack(i) < -scale) throw Error(ErrorCode::NotNormal, "q_polyhedric: x is not in K");
    if (slack(i) <= scale) active.push_back(set.G.row(i).transpose());
  }
  const Matrix GA = stack_rows(active, n);

  // g is normal iff its projection onto the tangent cone {G_A z <= 0} vanishes.
  const Vector tangential =
      GA.rows() == 0 ? g : project_polyhedron(g, Matrix(0, n), Vector(0), GA, Vector::Zero(GA.rows()));
  if (tangential.norm() > kActiveTol * (1.0 + g.norm()) * 10.0) {
    throw Error(ErrorCode::NotNormal, "q_polyhedric: g is not in the normal cone");
  }

  Matrix eq(0, n);
  if (g.norm() > kActiveTol) eq = (g / g.norm()).transpose();
  return make_q(ConeSpec::polyhedral(eq, GA), Matrix::Zero(n, n), x, g);
}

QuadraticSubderivative q_one_norm(const WeightedOneNorm& j, const Vector& x, const Vector& g) {
  require_same_size(x, g, "q_one_norm");
  const Eigen::Index n = x.size();
  if (j.weights.size() != n) throw Error(ErrorCode::InvalidArgument, "q_one_norm: weight size mismatch");
  std::vector<Vector> eq;
  std::vector<Vector> ineq;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar w = j.weights(i);
    const Scalar tol = kActiveTol * (1.0 + w);
    if (std::abs(x(i)) > kActiveTol) {
      const Scalar expected = x(i) > 0 ? w : -w;
      if (std::abs(g(i) - expected) > tol) throw Error(ErrorCode::NotNormal, "q_one_norm: g not a subgradient");
      continue;
    }
    if (std::abs(g(i)) > w + tol) throw Error(ErrorCode::NotNormal, "q_one_norm: |g_i| exceeds w_i");
    if (w <= tol) continue;
    if (g(i) >= w - tol) {
      ineq.push_back(unit_row(n, i, -1.0));
    } else if (g(i) <= -w + tol) {
      ineq.push_back(unit_row(n, i, 1.0));
    } else {
      eq.push_back(unit_row(n, i, 1.0));
    }
  }
  return make_q(ConeSpec::polyhedral(stack_rows(eq, n), stack_rows(ineq, n)), Matrix::Zero(n, n), x, g);
}

Vector pointwise_ball_multipliers(const PointwiseBall& set, const Vector& x, const Vector& g) {
  require_same_size(x, g, "pointwise_ball_multipliers");
  const Eigen::Index m = set.block_size();
  if (x.size() != m * set.blocks) throw Error(ErrorCode::InvalidArgument, "pointwise ball: dimension mismatch");
  const Matrix DtD = set.D.transpose() * set.D;
  Vector lambda = Vector::Zero(set.blocks);
  for (Eigen::Index i = 0; i < set.blocks; ++i) {
    const auto xi = x.segment(i * m, m);
    const auto gi = g.segment(i * m, m);
    const Scalar r = (set.D * xi).norm();
    if (r > 1.0 + kActiveTol) throw Error(ErrorCode::NotNormal, "pointwise ball: x is not in K");
    if (r < 1.0 - kActiveTol) {
      if (gi.norm() > kParallelTol * (1.0 + g.norm())) {
        throw Error(ErrorCode::NotNormal, "pointwise ball: nonzero normal on an inactive cell");
      }
      continue;
    }
    const Vector a = DtD * xi;
    const Scalar l = gi.dot(a) / a.squaredNorm();
    if ((gi - l * a).norm() > kParallelTol * (1.0 + gi.norm())) {
      throw Error(ErrorCode::NotNormal, "pointwise ball: normal not parallel to D'D x_i");
    }
    if (l < -kActiveTol) throw Error(ErrorCode::NotNormal, "pointwise ball: negative multiplier");
    lambda(i) = std::max(l, 0.0);
  }
  return lambda;
}

QuadraticSubderivative q_pointwise_ball(const PointwiseBall& set, const Vector& x, const Vector& g,
                                        const Vector& cell_weights) {
  const Vector lambda = pointwise_ball_multipliers(set, x, g);
  const Eigen::Index m = set.block_size();
  const Eigen::Index dim = m * set.blocks;
  const Vector mu = cell_weights.size() == 0 ? Vector::Ones(set.blocks) : cell_weights;
  if (mu.size() != set.blocks) throw Error(ErrorCode::InvalidArgument, "pointwise ball: weight size mismatch");
  const Matrix DtD = set.D.transpose() * set.D;

  std::vector<Vector> eq;
  std::vector<Vector> ineq;
  Matrix W = Matrix::Zero(dim, dim);
  for (Eigen::Index i = 0; i < set.blocks; ++i) {
    const auto xi = x.segment(i * m, m);
    if ((set.D * xi).norm() < 1.0 - kActiveTol) continue;
    Vector row = Vector::Zero(dim);
    const Vector a = DtD * xi;
    row.segment(i * m, m) = a / a.norm();
    if (lambda(i) > kActiveTol) {
      eq.push_back(row);
      W.block(i * m, i * m, m, m) = mu(i) * lambda(i) * DtD;
    } else {
      ineq.push_back(row);
    }
  }
  return make_q(ConeSpec::polyhedral(stack_rows(eq, dim), stack_rows(ineq, dim)), W, x, g);
}

QuadraticSubderivative q_ball_complement(const BallComplement& set, const Vector& x, const Vector& g) {
  require_same_size(x, g, "q_ball_complement");
  const Eigen::Index n = x.size();
  const Scalar R = set.radius;
  const Scalar r = x.norm();
  if (r < R * (1.0 - kActiveTol)) throw Error(ErrorCode::NotNormal, "ball complement: x is not in K");
  if (r > R * (1.0 + kActiveTol)) {
    if (g.norm() > kParallelTol * (1.0 + g.norm())) {
      throw Error(ErrorCode::NotNormal, "ball complement: nonzero normal at an interior point");
    }
    return make_q(ConeSpec::whole_space(n), Matrix::Zero(n, n), x, g);
  }
  const Scalar alpha = -g.dot(x) / (r * r);
  if ((g + alpha * x).norm() > kParallelTol * (1.0 + g.norm())) {
    throw Error(ErrorCode::NotNormal, "ball complement: normal not radial");
  }
  if (alpha < -kActiveTol) throw Error(ErrorCode::NotNormal, "ball complement: normal points outward");
  const Matrix row = (x / r).transpose();
  if (alpha > kActiveTol) {
    return make_q(ConeSpec::polyhedral(row, Matrix(0, n)), -alpha * Matrix::Identity(n, n), x, g);
  }
  return make_q(ConeSpec::polyhedral(Matrix(0, n), -row), Matrix::Zero(n, n), x, g);
}

QuadraticSubderivative q_prox_regular_shift(const QuadraticSubderivative& q_delta) {
  QuadraticSubderivative q = q_delta;
  q.W += Matrix::Identity(q.dim(), q.dim());
  return q;
}

QuadraticSubderivative catalog_subderivative(const NonsmoothFunctional& j, const Vector& x, const Vector& g) {
  switch (j.kind()) {
    case NonsmoothKind::IndicatorBox:
      return q_polyhedric(box_as_polyhedron(std::get<BoxSet>(j.data())), x, g);
    case NonsmoothKind::IndicatorPolyhedron:
      return q_polyhedric(std::get<Polyhedron>(j.data()), x, g);
    case NonsmoothKind::IndicatorPointwiseBall:
      return q_pointwise_ball(std::get<PointwiseBall>(j.data()), x, g);
    case NonsmoothKind::OneNormScaled:
      return q_one_norm(std::get<WeightedOneNorm>(j.data()), x, g);
    case NonsmoothKind::IndicatorBallComplement:
      return q_ball_complement(std::get<BallComplement>(j.data()), x, g);
    case NonsmoothKind::Custom:
      break;
  }
  throw Error(ErrorCode::InvalidArgument, "catalog_subderivative: no catalog entry for custom functionals");
}

// ---------------------------------------------------------------------------
// Brute-force oracle

Vector halton_point(std::uint64_t index, Eigen::Index d) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (d > static_cast<Eigen::Index>(std::size(kPrimes))) {
    throw Error(ErrorCode::InvalidArgument, "halton_point: dimension too large");
  }
  Vector u(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto base = static_cast<std::uint64_t>(kPrimes[k]);
    Scalar f = 1.0;
    Scalar r = 0.0;
    for (std::uint64_t i = index; i > 0; i /= base) {
      f /= static_cast<Scalar>(base);
      r += f * static_cast<Scalar>(i % base);
    }
    u(k) = r;
  }
  return u;
}

namespace {

struct PenalizedQuotient {
  const NonsmoothFunctional& j;
  const Vector& x;
  const Vector& g;
  const Vector& z;
  Scalar jx;
  Scalar t;
  Scalar kappa;

  Scalar operator()(const Vector& zp) const {
    const Scalar jv = j.evaluate(x + t * zp);
    if (!std::isfinite(jv)) return kInf;
    const Scalar quotient = (jv - jx - t * g.dot(zp)) / (0.5 * t * t);
    return quotient + kappa * (zp - z).squaredNorm() / t;
  }
};

}  // namespace

Scalar q_bruteforce_oracle(const NonsmoothFunctional& j, const Vector& x, const Vector& g, const Vector& z,
                           const OracleOptions& opts) {
  const Eigen::Index d = x.size();
  if (d > 4) throw Error(ErrorCode::InvalidArgument, "q_bruteforce_oracle: dim must be <= 4");
  if (opts.t_grid.size() < 2) throw Error(ErrorCode::InvalidArgument, "q_bruteforce_oracle: need two t values");
  const Scalar jx = j.evaluate(x);
  if (!std::isfinite(jx)) throw Error(ErrorCode::InvalidArgument, "q_bruteforce_oracle: x outside dom j");
  const Scalar R = opts.neighborhood_radius;

  std::vector<Scalar> values;
  values.reserve(opts.t_grid.size());
  for (const Scalar t : opts.t_grid) {
    // Exact minimizer of quotient + |z' - z|^2 / (R^2 t): x + t z' = prox_{R^2 t j}(x + t z + R^2 t g).
    const Scalar kappa = 1.0 / (R * R);
    const PenalizedQuotient phi{j, x, g, z, jx, t, kappa};
    const Scalar s = R * R * t;
    const Vector w = j.prox(x + t * z + s * g, s);
    Scalar best = phi((w - x) / t);
    const Scalar radius = R * std::sqrt(t);
    int accepted = 0;
    for (std::uint64_t idx = 1; accepted < opts.samples && idx < 8ULL * static_cast<std::uint64_t>(opts.samples);
         ++idx) {
      const Vector u = 2.0 * halton_point(idx, d) - Vector::Ones(d);
      if (u.squaredNorm() > 1.0) continue;
      ++accepted;
      best = std::min(best, phi(z + radius * u));
    }
    values.push_back(best);
  }

  const std::size_t n = values.size();
  const Scalar t1 = opts.t_grid[n - 2];
  const Scalar t2 = opts.t_grid[n - 1];
  const Scalar v1 = values[n - 2];
  const Scalar v2 = values[n - 1];
  if (!std::isfinite(v1) || !std::isfinite(v2)) return kInf;
  const Scalar extrapolated = v2 - t2 * (v1 - v2) / (t1 - t2);
  // A finite limit makes t v(t) vanish linearly; a divergent one leaves an offset.
  const Scalar s1 = t1 * v1;
  const Scalar s2 = t2 * v2;
  const Scalar offset = s2 - t2 * (s1 - s2) / (t1 - t2);
  if (extrapolated > opts.infinity_threshold || offset > 1e-6 * std::max(1.0, std::abs(extrapolated))) {
    return kInf;
  }
  return extrapolated;
}

}  // namespace vis
