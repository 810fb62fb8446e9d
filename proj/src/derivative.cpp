#include "vis/derivative.hpp"

#include "vis/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

namespace vis {

namespace {

Scalar spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
}

Matrix sym(const Matrix& M) { return 0.5 * (M + M.transpose()); }

struct ReducedVi {
  Matrix N;   // basis of the cone span
  Matrix M;   // N'(A_x + W)N
  Vector b;   // N'A_p q
  Matrix G;   // inequality rows in reduced coordinates
};

// KKT solve on the face {G_A w = 0}; returns false when the face guess is wrong.
bool polish_on_face(const ReducedVi& r, Vector& w) {
  const Scalar scale = 1.0 + w.norm();
  std::vector<Eigen::Index> act;
  for (Eigen::Index i = 0; i < r.G.rows(); ++i) {
    if (r.G.row(i).dot(w) >= -kActiveTol * scale * (1.0 + r.G.row(i).norm())) act.push_back(i);
  }
  const Eigen::Index k = r.M.rows();
  const auto na = static_cast<Eigen::Index>(act.size());
  Matrix K = Matrix::Zero(k + na, k + na);
  Vector rhs = Vector::Zero(k + na);
  K.topLeftCorner(k, k) = r.M;
  for (Eigen::Index a = 0; a < na; ++a) {
    K.block(0, k + a, k, 1) = r.G.row(act[static_cast<std::size_t>(a)]).transpose();
    K.block(k + a, 0, 1, k) = r.G.row(act[static_cast<std::size_t>(a)]);
  }
  rhs.head(k) = -r.b;
  const Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
  if ((K * sol - rhs).norm() > 1e-10 * (1.0 + rhs.norm())) return false;
  const Vector wp = sol.head(k);
  const Scalar mscale = 1e-9 * (1.0 + r.b.norm() + r.M.norm() * wp.norm());
  if (na > 0 && sol.tail(na).minCoeff() < -mscale) return false;
  if (r.G.rows() > 0 && (r.G * wp).maxCoeff() > kFeasTol * (1.0 + wp.norm())) return false;
  w = wp;
  return true;
}

}  // namespace

Scalar derivative_vi_residual(const Matrix& Ap, const Matrix& Ax, const QuadraticSubderivative& Q,
                              const Vector& q, const Vector& y) {
  const Matrix M = Ax + Q.W;
  const Scalar s = 1.0 / std::max<Scalar>(1.0, spectral_norm(M));
  const Vector v = y - s * (Ap * q + M * y);
  return (y - Q.cone.project(v)).norm();
}

DerivativeSolution solve_derivative_vi(const Matrix& Ap, const Matrix& Ax, const QuadraticSubderivative& Q,
                                       const Vector& q, const DerivativeOptions& opts) {
  const Eigen::Index n = Ax.rows();
  if (Ax.cols() != n || Q.dim() != n || Ap.rows() != n || Ap.cols() != q.size()) {
    throw Error(ErrorCode::InvalidArgument, "solve_derivative_vi: dimension mismatch");
  }
  DerivativeSolution out;
  out.q = q;
  const Vector b = Ap * q;
  const Scalar ax_norm = spectral_norm(Ax);

  ReducedVi r;
  r.N = Q.cone.span_basis();
  const Eigen::Index k = r.N.cols();
  r.M = r.N.transpose() * (Ax + Q.W) * r.N;
  r.b = r.N.transpose() * b;
  r.G = Q.cone.ineq() * r.N;

  if (k == 0) {
    out.y = Vector::Zero(n);
    out.coercivity = kInf;
    return out;
  }

  const Matrix S = sym(r.M);
  const Scalar c = Eigen::SelfAdjointEigenSolver<Matrix>(S, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (!(c > 1e-12 * std::max<Scalar>(1.0, spectral_norm(r.M)))) {
    throw Error(ErrorCode::NotCoercive, "solve_derivative_vi: A_x + Q not coercive on the cone span (c = " +
                                            std::to_string(c) + ")");
  }
  out.coercivity = c;
  out.epsilon = ax_norm > 0.0 ? c / (2.0 * ax_norm) : kInf;

  const Eigen::LLT<Matrix> llt(S);
  const Matrix Linv = llt.matrixL().solve(Matrix::Identity(k, k));
  const Scalar nu = spectral_norm(Linv * (r.M - S) * Linv.transpose());
  const Scalar beta = 1.0 + nu * nu;
  out.contraction = nu / std::sqrt(beta);

  Vector w = opts.y0.size() == n ? Vector(r.N.transpose() * opts.y0) : Vector::Zero(k);
  const Matrix H = beta * S;
  const Matrix lag = r.M - H;
  QuadraticProgram qp{H, Vector(), Matrix(0, k), Vector(0), r.G, Vector::Zero(r.G.rows())};
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    qp.f = r.b + lag * w;
    const Vector next = solve_qp(qp).x;
    const Scalar step = (next - w).norm();
    w = next;
    if (nu == 0.0 || step <= 1e-15 * (1.0 + w.norm())) break;
    if (out.contraction < 1.0 && step * out.contraction / (1.0 - out.contraction) <= 1e-14 * (1.0 + w.norm())) {
      break;
    }
  }
  out.iterations = it + 1;
  if (it == opts.max_iters) throw Error(ErrorCode::NonConvergence, "solve_derivative_vi: splitting did not converge");

  Vector y = r.N * w;
  Scalar res = derivative_vi_residual(Ap, Ax, Q, q, y);
  Vector wp = w;
  if (polish_on_face(r, wp)) {
    const Vector yp = r.N * wp;
    const Scalar rp = derivative_vi_residual(Ap, Ax, Q, q, yp);
    if (rp <= res) {
      y = yp;
      res = rp;
    }
  }
  if (res > opts.tol * (1.0 + b.norm())) {
    throw Error(ErrorCode::NonConvergence, "solve_derivative_vi: residual " + std::to_string(res));
  }
  out.y = y;
  out.vi_residual = res;
  out.q_value = Q.form(y);
  out.value_identity_gap = std::abs(out.q_value + (b + Ax * y).dot(y));
  return out;
}

NecessaryConditionReport check_necessary_conditions(const DerivativeSolution& sol,
                                                    const QuadraticSubderivative& Q, const Matrix& Ap,
                                                    const Matrix& Ax, std::uint64_t seed, int samples) {
  NecessaryConditionReport rep;
  const Vector& y = sol.y;
  const Vector a = Ap * sol.q + Ax * y;
  const Scalar qy = Q.form(y);
  rep.value_identity_gap = std::abs(qy + a.dot(y));
  rep.y_in_cone = Q.cone.contains(y);
  auto expr = [&](const Vector& z) { return a.dot(z - y) + 0.5 * Q.form(z) - 0.5 * qy; };

  Scalar worst = kInf;
  int count = 0;
  auto take = [&](const Vector& z) {
    worst = std::min(worst, expr(z));
    ++count;
  };
  for (Scalar s : {0.0, 0.5, 0.9, 0.99, 1.01, 1.1, 1.5, 2.0}) take(s * y);

  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal;
  std::uniform_real_distribution<Scalar> unif(0.0, 1.0);
  const Eigen::Index n = y.size();
  const Scalar scale = 1.0 + y.norm();
  while (count < samples) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    if (count % 2 == 0) {
      take(Q.cone.project(3.0 * scale * unif(rng) * v / std::max<Scalar>(v.norm(), 1e-300)));
    } else {
      const Scalar radius = scale * std::pow(10.0, -4.0 * unif(rng));
      take(Q.cone.project(y + radius * v));
    }
  }
  rep.samples = count;
  rep.min_linearized_vi = worst;
  return rep;
}

}  // namespace vis
