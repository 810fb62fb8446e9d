#include "vis/qp.hpp"

#include <algorithm>
#include <cmath>

namespace vis {

namespace {

struct Constraint {
  Vector n;  // s(x) = n'x - b >= 0 (or = 0 for equalities)
  Scalar b;
  bool equality;
  Eigen::Index row;  // row in E or G
  Scalar sign;       // +1 or -1, orientation applied to equalities
};

}  // namespace

QpResult solve_qp(const QuadraticProgram& qp, int max_iters) {
  const Eigen::Index n = qp.dim();
  if (qp.f.size() != n || qp.E.rows() != qp.e.size() || qp.G.rows() != qp.h.size() ||
      (qp.E.rows() > 0 && qp.E.cols() != n) || (qp.G.rows() > 0 && qp.G.cols() != n)) {
    throw Error(ErrorCode::InvalidArgument, "solve_qp: inconsistent dimensions");
  }
  Eigen::LLT<Matrix> llt(qp.H);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotCoercive, "solve_qp: Hessian is not positive definite");
  }

  std::vector<Constraint> cons;
  cons.reserve(static_cast<size_t>(qp.E.rows() + qp.G.rows()));
  for (Eigen::Index i = 0; i < qp.E.rows(); ++i) {
    cons.push_back({qp.E.row(i).transpose(), qp.e(i), true, i, 1.0});
  }
  for (Eigen::Index i = 0; i < qp.G.rows(); ++i) {
    cons.push_back({-qp.G.row(i).transpose(), -qp.h(i), false, i, 1.0});
  }

  Vector x = -llt.solve(qp.f);
  std::vector<size_t> active;  // indices into cons
  Vector u(0);                 // multipliers of active constraints
  std::vector<bool> in_active(cons.size(), false);

  auto violation = [&](const Constraint& c) { return c.n.dot(x) - c.b; };
  auto feas_tol = [&](const Constraint& c) {
    return 1e-12 * (1.0 + std::abs(c.b) + c.n.cwiseAbs().dot(x.cwiseAbs()));
  };

  int iter = 0;
  // Equalities first, then the most violated inequality.
  while (true) {
    if (++iter > max_iters) throw Error(ErrorCode::NonConvergence, "solve_qp: iteration limit");
    size_t p = cons.size();
    Scalar worst = 0.0;
    for (size_t i = 0; i < cons.size(); ++i) {
      if (in_active[i]) continue;
      const Scalar s = violation(cons[i]);
      if (cons[i].equality) {
        p = i;
        break;
      }
      const Scalar scaled = s / std::max<Scalar>(1e-300, cons[i].n.norm());
      if (s < -feas_tol(cons[i]) && scaled < worst) {
        worst = scaled;
        p = i;
      }
    }
    if (p == cons.size()) break;

    Constraint& cp = cons[p];
    if (cp.equality && violation(cp) > 0.0) {
      cp.n = -cp.n;
      cp.b = -cp.b;
      cp.sign = -1.0;
    }

    Vector uplus(static_cast<Eigen::Index>(active.size()) + 1);
    uplus.head(u.size()) = u;
    uplus(u.size()) = 0.0;

    while (true) {
      if (++iter > max_iters) throw Error(ErrorCode::NonConvergence, "solve_qp: iteration limit");
      const auto k = static_cast<Eigen::Index>(active.size());
      const Vector hinv_np = llt.solve(cp.n);
      Vector z = hinv_np;
      Vector r(k);
      if (k > 0) {
        Matrix N(n, k);
        for (Eigen::Index j = 0; j < k; ++j) N.col(j) = cons[active[static_cast<size_t>(j)]].n;
        const Matrix hinv_N = llt.solve(N);
        const Matrix M = N.transpose() * hinv_N;
        Eigen::ColPivHouseholderQR<Matrix> qr(M);
        r = qr.solve(N.transpose() * hinv_np);
        z -= hinv_N * r;
      }

      Scalar t1 = kInf;
      Eigen::Index drop = -1;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (cons[active[static_cast<size_t>(j)]].equality) continue;
        if (r(j) > 0.0) {
          const Scalar tj = uplus(j) / r(j);
          if (tj < t1) {
            t1 = tj;
            drop = j;
          }
        }
      }
      Scalar t2 = kInf;
      const Scalar zn = z.dot(cp.n);
      if (zn > 1e-13 * std::max<Scalar>(1e-300, cp.n.dot(hinv_np))) {
        t2 = -violation(cp) / zn;
        t2 = std::max<Scalar>(t2, 0.0);
      }
      const Scalar t = std::min(t1, t2);
      if (!std::isfinite(t) && std::abs(violation(cp)) <= 1e3 * feas_tol(cp)) {
        // Linearly dependent row violated only by rounding.
        in_active[p] = true;
        uplus.conservativeResize(k);
        u = uplus;
        break;
      }
      if (!std::isfinite(t)) {
        throw Error(ErrorCode::Infeasible, "solve_qp: constraints are inconsistent");
      }
      if (std::isfinite(t2)) x += t * z;
      if (k > 0) uplus.head(k) -= t * r;
      uplus(k) += t;

      if (std::isfinite(t2) && t2 <= t1) {
        active.push_back(p);
        in_active[p] = true;
        u = uplus;
        break;
      }
      // Partial step: drop the blocking inequality and retry the same p.
      in_active[active[static_cast<size_t>(drop)]] = false;
      active.erase(active.begin() + drop);
      Vector shrunk(uplus.size() - 1);
      shrunk.head(drop) = uplus.head(drop);
      shrunk.tail(uplus.size() - 1 - drop) = uplus.tail(uplus.size() - 1 - drop);
      uplus = shrunk;
    }
  }

  QpResult res;
  res.x = x;
  res.lambda = Vector::Zero(qp.E.rows());
  res.nu = Vector::Zero(qp.G.rows());
  for (size_t j = 0; j < active.size(); ++j) {
    const Constraint& c = cons[active[j]];
    const Scalar uj = u(static_cast<Eigen::Index>(j));
    if (c.equality) {
      res.lambda(c.row) = -c.sign * uj;
    } else {
      res.nu(c.row) = uj;
      res.active.push_back(c.row);
    }
  }
  std::sort(res.active.begin(), res.active.end());
  res.iterations = iter;
  return res;
}

Vector project_polyhedron(const Vector& v, const Matrix& E, const Vector& e, const Matrix& G,
                          const Vector& h) {
  QuadraticProgram qp;
  qp.H = Matrix::Identity(v.size(), v.size());
  qp.f = -v;
  qp.E = E.rows() > 0 ? E : Matrix(0, v.size());
  qp.e = e;
  qp.G = G.rows() > 0 ? G : Matrix(0, v.size());
  qp.h = h;
  return solve_qp(qp).x;
}

Matrix null_space(const Matrix& M, Eigen::Index cols, Scalar rel_tol) {
  if (M.rows() == 0) return Matrix::Identity(cols, cols);
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const Scalar smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * std::max<Scalar>(1.0, smax)) ++rank;
  }
  return svd.matrixV().rightCols(cols - rank);
}

}  // namespace vis
