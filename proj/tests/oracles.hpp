#pragma once
// Brute-force reference solvers used only by the tests. They enumerate active
// sets instead of iterating, so they share no code path with the library.

#include "vis/types.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>
#include <optional>
#include <random>

namespace vis::oracle {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd;
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return scale * random_matrix(rng, n, 1).col(0);
}

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double shift = 0.5) {
  const Matrix R = random_matrix(rng, n, n);
  return R * R.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n);
}

/// Solve the affine VI  find y in C: <M y + b, z - y> >= 0 for all z in C,
/// C = {E y = e, G y <= h}, by trying every subset of inequality rows as the
/// active set and keeping the KKT point with nonnegative multipliers.
inline std::optional<Vector> enumerate_affine_vi(const Matrix& M, const Vector& b, const Matrix& E,
                                                 const Vector& e, const Matrix& G, const Vector& h,
                                                 double tol = 1e-9) {
  const Eigen::Index n = M.rows();
  const Eigen::Index me = E.rows();
  const Eigen::Index mi = G.rows();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << mi); ++mask) {
    std::vector<Eigen::Index> S;
    for (Eigen::Index i = 0; i < mi; ++i)
      if (mask & (std::uint64_t{1} << i)) S.push_back(i);
    const Eigen::Index k = me + static_cast<Eigen::Index>(S.size());
    Matrix C(k, n);
    Vector d(k);
    if (me > 0) {
      C.topRows(me) = E;
      d.head(me) = e;
    }
    for (size_t s = 0; s < S.size(); ++s) {
      C.row(me + static_cast<Eigen::Index>(s)) = G.row(S[s]);
      d(me + static_cast<Eigen::Index>(s)) = h(S[s]);
    }
    Matrix K = Matrix::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = M;
    K.topRightCorner(n, k) = C.transpose();
    K.bottomLeftCorner(k, n) = C;
    Vector rhs(n + k);
    rhs.head(n) = -b;
    rhs.tail(k) = d;
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) continue;
    const Vector sol = lu.solve(rhs);
    const Vector y = sol.head(n);
    bool ok = true;
    for (size_t s = 0; s < S.size(); ++s)
      if (sol(n + me + static_cast<Eigen::Index>(s)) < -tol) ok = false;
    if (mi > 0 && ((G * y - h).array() > tol).any()) ok = false;
    if (ok) return y;
  }
  return std::nullopt;
}

/// Box-constrained strictly convex QP  min 0.5 x'Hx + f'x, lo <= x <= hi,
/// by enumerating the 3^n patterns {lower, upper, free}.
inline std::optional<Vector> enumerate_box_qp(const Matrix& H, const Vector& f, const Vector& lo,
                                              const Vector& hi) {
  const Eigen::Index n = H.rows();
  std::uint64_t total = 1;
  for (Eigen::Index i = 0; i < n; ++i) total *= 3;
  std::optional<Vector> best;
  double best_val = kInf;
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t c = code;
    Vector x = Vector::Zero(n);
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index i = 0; i < n; ++i, c /= 3) {
      const auto s = c % 3;
      if (s == 0) x(i) = lo(i);
      else if (s == 1) x(i) = hi(i);
      else free_idx.push_back(i);
    }
    if (!free_idx.empty()) {
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Matrix Hff(nf, nf);
      Vector rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        rhs(a) = -f(free_idx[a]);
        for (Eigen::Index i = 0; i < n; ++i) {
          bool fixed = std::find(free_idx.begin(), free_idx.end(), i) == free_idx.end();
          if (fixed) rhs(a) -= H(free_idx[a], i) * x(i);
        }
        for (Eigen::Index b2 = 0; b2 < nf; ++b2) Hff(a, b2) = H(free_idx[a], free_idx[b2]);
      }
      const Vector xf = Hff.llt().solve(rhs);
      for (Eigen::Index a = 0; a < nf; ++a) x(free_idx[a]) = xf(a);
    }
    if (((x - lo).array() < -1e-12).any() || ((hi - x).array() < -1e-12).any()) continue;
    const double val = 0.5 * x.dot(H * x) + f.dot(x);
    if (val < best_val) {
      best_val = val;
      best = x;
    }
  }
  return best;
}

}  // namespace vis::oracle
