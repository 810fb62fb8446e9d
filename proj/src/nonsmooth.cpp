#include "vis/nonsmooth.hpp"

#include "vis/qp.hpp"

#include <cmath>

namespace vis {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Squared singular values padded with zeros to length m.
Vector padded_sq(const Vector& s, Eigen::Index m) {
  Vector out = Vector::Zero(m);
  out.head(s.size()) = s.array().square().matrix();
  return out;
}

}  // namespace

const char* to_string(NonsmoothKind kind) {
  switch (kind) {
    case NonsmoothKind::IndicatorBox: return "indicator_box";
    case NonsmoothKind::IndicatorPolyhedron: return "indicator_polyhedron";
    case NonsmoothKind::IndicatorPointwiseBall: return "indicator_pointwise_ball";
    case NonsmoothKind::OneNormScaled: return "one_norm_scaled";
    case NonsmoothKind::IndicatorBallComplement: return "indicator_halfspace_complement_ball";
    case NonsmoothKind::Custom: return "custom";
  }
  return "unknown";
}

Vector project_ellipsoidal_block(const Vector& v, const Matrix& D, const Matrix& V, const Vector& s,
                                 Scalar* multiplier) {
  const Scalar dv = (D * v).norm();
  if (dv <= 1.0) {
    if (multiplier) *multiplier = 0.0;
    return v;
  }
  const Eigen::Index m = V.cols();
  const Vector a = V.transpose() * v;
  const Vector s2 = padded_sq(s, m);

  auto dz_norm = [&](Scalar lam) {
    Scalar acc = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const Scalar d = 1.0 + lam * s2(k);
      acc += s2(k) * a(k) * a(k) / (d * d);
    }
    return std::sqrt(acc);
  };
  auto dz_norm_deriv = [&](Scalar lam) {
    // d/dlam |Dz|^2 = -2 sum s^4 a^2 / (1 + lam s^2)^3
    Scalar acc = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const Scalar d = 1.0 + lam * s2(k);
      acc -= 2.0 * s2(k) * s2(k) * a(k) * a(k) / (d * d * d);
    }
    return acc;
  };

  Scalar hi = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (s2(k) > 0.0) hi += a(k) * a(k) / s2(k);
  }
  hi = std::sqrt(hi) + 1.0;
  Scalar lo = 0.0;
  Scalar lam = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const Scalar r = dz_norm(lam);
    const Scalar phi = 1.0 / r - 1.0;  // increasing in lam, nearly linear
    if (phi < 0.0) lo = lam; else hi = lam;
    if (std::abs(phi) < 1e-16 || hi - lo <= 1e-16 * std::max<Scalar>(1.0, hi)) break;
    // Newton on 1/|Dz| - 1; d(1/r)/dlam = -(d r^2/dlam) / (2 r^3)
    const Scalar dphi = -dz_norm_deriv(lam) / (2.0 * r * r * r);
    Scalar next = lam - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    lam = next;
  }
  if (multiplier) *multiplier = lam;
  Vector z = V * (a.array() / (1.0 + lam * s2.array())).matrix();
  return z;
}

NonsmoothFunctional::NonsmoothFunctional(Data data) : data_(std::move(data)) {
  if (auto* b = std::get_if<BoxSet>(&data_)) {
    if (b->lower.size() != b->upper.size() || (b->lower.array() > b->upper.array()).any()) {
      throw Error(ErrorCode::InvalidArgument, "box bounds inconsistent");
    }
  } else if (auto* p = std::get_if<Polyhedron>(&data_)) {
    if (p->G.rows() != p->h.size()) throw Error(ErrorCode::InvalidArgument, "polyhedron G/h mismatch");
  } else if (auto* pb = std::get_if<PointwiseBall>(&data_)) {
    if (pb->D.size() == 0 || pb->blocks < 1) {
      throw Error(ErrorCode::InvalidArgument, "pointwise ball needs nonempty D and blocks >= 1");
    }
    Eigen::JacobiSVD<Matrix> svd(pb->D, Eigen::ComputeFullV);
    ball_V_ = svd.matrixV();
    ball_s_ = svd.singularValues();
  } else if (auto* w = std::get_if<WeightedOneNorm>(&data_)) {
    if ((w->weights.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "negative weights");
  } else if (auto* bc = std::get_if<BallComplement>(&data_)) {
    if (!(bc->radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  } else if (auto* c = std::get_if<CustomFunctional>(&data_)) {
    if (!c->eval || !c->prox) throw Error(ErrorCode::InvalidArgument, "custom functional needs eval and prox");
  }
}

NonsmoothFunctional NonsmoothFunctional::box(Vector lower, Vector upper) {
  return NonsmoothFunctional(BoxSet{std::move(lower), std::move(upper)});
}
NonsmoothFunctional NonsmoothFunctional::polyhedron(Matrix G, Vector h) {
  return NonsmoothFunctional(Polyhedron{std::move(G), std::move(h)});
}
NonsmoothFunctional NonsmoothFunctional::pointwise_ball(Matrix D, Eigen::Index blocks) {
  return NonsmoothFunctional(PointwiseBall{std::move(D), blocks});
}
NonsmoothFunctional NonsmoothFunctional::one_norm(Vector weights) {
  return NonsmoothFunctional(WeightedOneNorm{std::move(weights)});
}
NonsmoothFunctional NonsmoothFunctional::ball_complement(Scalar radius) {
  return NonsmoothFunctional(BallComplement{radius});
}

NonsmoothKind NonsmoothFunctional::kind() const {
  return static_cast<NonsmoothKind>(data_.index());
}

bool NonsmoothFunctional::is_convex() const {
  return kind() != NonsmoothKind::IndicatorBallComplement && kind() != NonsmoothKind::Custom;
}

bool NonsmoothFunctional::is_indicator() const {
  return kind() != NonsmoothKind::OneNormScaled && kind() != NonsmoothKind::Custom;
}

Eigen::Index NonsmoothFunctional::dim() const {
  return std::visit(overloaded{
                        [](const BoxSet& b) -> Eigen::Index { return b.lower.size(); },
                        [](const Polyhedron& p) -> Eigen::Index { return p.G.cols(); },
                        [](const PointwiseBall& pb) -> Eigen::Index { return pb.blocks * pb.block_size(); },
                        [](const WeightedOneNorm& w) -> Eigen::Index { return w.weights.size(); },
                        [](const BallComplement&) -> Eigen::Index { return -1; },
                        [](const CustomFunctional&) -> Eigen::Index { return -1; },
                    },
                    data_);
}

Scalar NonsmoothFunctional::evaluate(const Vector& x) const {
  return std::visit(
      overloaded{
          [&](const BoxSet& b) -> Scalar {
            const bool in = ((x - b.lower).array() >= -kFeasTol * (1.0 + b.lower.array().abs())).all() &&
                            ((b.upper - x).array() >= -kFeasTol * (1.0 + b.upper.array().abs())).all();
            return in ? 0.0 : kInf;
          },
          [&](const Polyhedron& p) -> Scalar {
            if (p.G.rows() == 0) return 0.0;
            const Vector slack = p.h - p.G * x;
            const Vector scale = Vector::Ones(slack.size()) + p.h.cwiseAbs() +
                                 p.G.cwiseAbs() * x.cwiseAbs();
            return (slack.array() >= -kFeasTol * scale.array()).all() ? 0.0 : kInf;
          },
          [&](const PointwiseBall& pb) -> Scalar {
            const Eigen::Index m = pb.block_size();
            for (Eigen::Index i = 0; i < pb.blocks; ++i) {
              if ((pb.D * x.segment(i * m, m)).norm() > 1.0 + kFeasTol) return kInf;
            }
            return 0.0;
          },
          [&](const WeightedOneNorm& w) -> Scalar { return w.weights.dot(x.cwiseAbs()); },
          [&](const BallComplement& bc) -> Scalar {
            return x.norm() >= bc.radius * (1.0 - kFeasTol) ? 0.0 : kInf;
          },
          [&](const CustomFunctional& c) -> Scalar { return c.eval(x); },
      },
      data_);
}

Vector NonsmoothFunctional::prox(const Vector& v, Scalar sigma) const {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidStep, "prox requires sigma > 0");
  return std::visit(
      overloaded{
          [&](const BoxSet& b) -> Vector { return clamp_box(v, b.lower, b.upper); },
          [&](const Polyhedron& p) -> Vector {
            return project_polyhedron(v, Matrix(0, v.size()), Vector(0), p.G, p.h);
          },
          [&](const PointwiseBall& pb) -> Vector {
            const Eigen::Index m = pb.block_size();
            Vector z(v.size());
            for (Eigen::Index i = 0; i < pb.blocks; ++i) {
              z.segment(i * m, m) = project_ellipsoidal_block(v.segment(i * m, m), pb.D, ball_V_, ball_s_);
            }
            return z;
          },
          [&](const WeightedOneNorm& w) -> Vector { return soft_threshold(v, sigma * w.weights); },
          [&](const BallComplement& bc) -> Vector {
            const Scalar nv = v.norm();
            if (nv >= bc.radius) return v;
            if (nv == 0.0) {
              Vector e = Vector::Zero(v.size());
              e(0) = bc.radius;
              return e;
            }
            return (bc.radius / nv) * v;
          },
          [&](const CustomFunctional& c) -> Vector { return c.prox(v, sigma); },
      },
      data_);
}

Matrix NonsmoothFunctional::prox_jacobian(const Vector& v, Scalar sigma) const {
  const Eigen::Index n = v.size();
  return std::visit(
      overloaded{
          [&](const BoxSet& b) -> Matrix {
            Vector d(n);
            for (Eigen::Index i = 0; i < n; ++i) d(i) = (v(i) > b.lower(i) && v(i) < b.upper(i)) ? 1.0 : 0.0;
            return d.asDiagonal();
          },
          [&](const Polyhedron& p) -> Matrix {
            QuadraticProgram qp;
            qp.H = Matrix::Identity(n, n);
            qp.f = -v;
            qp.E = Matrix(0, n);
            qp.e = Vector(0);
            qp.G = p.G;
            qp.h = p.h;
            const QpResult res = solve_qp(qp);
            if (res.active.empty()) return Matrix::Identity(n, n);
            Matrix A(static_cast<Eigen::Index>(res.active.size()), n);
            for (size_t k = 0; k < res.active.size(); ++k) A.row(static_cast<Eigen::Index>(k)) = p.G.row(res.active[k]);
            const Matrix Z = null_space(A, n);
            return Z * Z.transpose();
          },
          [&](const PointwiseBall& pb) -> Matrix {
            const Eigen::Index m = pb.block_size();
            Matrix J = Matrix::Zero(n, n);
            const Vector s2 = padded_sq(ball_s_, m);
            for (Eigen::Index i = 0; i < pb.blocks; ++i) {
              Scalar lam = 0.0;
              const Vector z = project_ellipsoidal_block(v.segment(i * m, m), pb.D, ball_V_, ball_s_, &lam);
              if (lam <= 0.0) {
                J.block(i * m, i * m, m, m).setIdentity();
                continue;
              }
              const Matrix Minv = ball_V_ * (1.0 / (1.0 + lam * s2.array())).matrix().asDiagonal() *
                                  ball_V_.transpose();
              const Vector w = pb.D.transpose() * (pb.D * z);
              const Vector Mw = Minv * w;
              J.block(i * m, i * m, m, m) = Minv - Mw * Mw.transpose() / w.dot(Mw);
            }
            return J;
          },
          [&](const WeightedOneNorm& w) -> Matrix {
            Vector d(n);
            for (Eigen::Index i = 0; i < n; ++i) d(i) = std::abs(v(i)) > sigma * w.weights(i) ? 1.0 : 0.0;
            return d.asDiagonal();
          },
          [&](const BallComplement& bc) -> Matrix {
            const Scalar nv = v.norm();
            if (nv >= bc.radius || nv == 0.0) return Matrix::Identity(n, n);
            const Vector u = v / nv;
            return (bc.radius / nv) * (Matrix::Identity(n, n) - u * u.transpose());
          },
          [&](const CustomFunctional& c) -> Matrix {
            if (c.prox_jacobian) return c.prox_jacobian(v, sigma);
            // Central differences of the user prox.
            Matrix J(n, n);
            const Scalar h = 1e-7 * std::max<Scalar>(1.0, v.norm());
            for (Eigen::Index k = 0; k < n; ++k) {
              Vector vp = v, vm = v;
              vp(k) += h;
              vm(k) -= h;
              J.col(k) = (c.prox(vp, sigma) - c.prox(vm, sigma)) / (2.0 * h);
            }
            return J;
          },
      },
      data_);
}

}  // namespace vis
