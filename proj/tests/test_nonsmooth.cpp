#include "doctest.h"
#include "oracles.hpp"
#include "vis/nonsmooth.hpp"

#include <cmath>

using namespace vis;

namespace {

double prox_objective(const NonsmoothFunctional& j, const Vector& z, const Vector& v, double sigma) {
  return sigma * j.evaluate(z) + 0.5 * (z - v).squaredNorm();
}

// Per-block projection onto {|Dz| <= 1} via plain bisection on the multiplier
// and an LU solve per trial value.
Vector bisection_block_projection(const Vector& v, const Matrix& D) {
  if ((D * v).norm() <= 1.0) return v;
  const Eigen::Index m = v.size();
  const Matrix DtD = D.transpose() * D;
  auto z_of = [&](double lam) -> Vector {
    return (Matrix::Identity(m, m) + lam * DtD).partialPivLu().solve(v);
  };
  double lo = 0.0, hi = 1.0;
  while ((D * z_of(hi)).norm() > 1.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((D * z_of(mid)).norm() > 1.0) lo = mid; else hi = mid;
  }
  return z_of(0.5 * (lo + hi));
}

}  // namespace

TEST_CASE("prox: box, candidates per coordinate") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.01, 3.0);
  const Vector lo = Vector::Constant(3, -1.0), hi = Vector::Constant(3, 1.0);
  const auto j = NonsmoothFunctional::box(lo, hi);
  for (int s = 0; s < 1000; ++s) {
    const Vector v = oracle::random_vector(rng, 3, 2.0);
    const double sigma = unif(rng);
    const Vector z = j.prox(v, sigma);
    Vector ref(3);
    for (int i = 0; i < 3; ++i) {
      double best = kInf;
      for (double c : {lo(i), hi(i), v(i)}) {
        if (c < lo(i) || c > hi(i)) continue;
        const double val = 0.5 * (c - v(i)) * (c - v(i));
        if (val < best) {
          best = val;
          ref(i) = c;
        }
      }
    }
    CHECK((z - ref).norm() < 1e-8);
  }
}

TEST_CASE("prox: weighted one norm, candidates per coordinate") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(0.01, 3.0);
  Vector w(4);
  w << 0.5, 1.0, 2.0, 0.0;
  const auto j = NonsmoothFunctional::one_norm(w);
  for (int s = 0; s < 1000; ++s) {
    const Vector v = oracle::random_vector(rng, 4, 2.0);
    const double sigma = unif(rng);
    const Vector z = j.prox(v, sigma);
    for (int i = 0; i < 4; ++i) {
      double best = kInf, arg = 0.0;
      for (double c : {0.0, v(i) - sigma * w(i), v(i) + sigma * w(i)}) {
        const double val = sigma * w(i) * std::abs(c) + 0.5 * (c - v(i)) * (c - v(i));
        if (val < best) {
          best = val;
          arg = c;
        }
      }
      CHECK(std::abs(z(i) - arg) < 1e-8);
    }
  }
}

TEST_CASE("prox: soft thresholding example") {
  const auto j = NonsmoothFunctional::one_norm(Vector::Ones(1));
  CHECK(j.prox(Vector::Constant(1, 0.5), 1.0)(0) == 0.0);
  CHECK(std::abs(j.prox(Vector::Constant(1, 1.5), 1.0)(0) - 0.5) < 1e-15);
}

TEST_CASE("prox: polyhedron against active-set enumeration") {
  std::mt19937_64 rng(3);
  Matrix G = oracle::random_matrix(rng, 5, 3);
  Vector h = Vector::Constant(5, 1.0);
  const auto j = NonsmoothFunctional::polyhedron(G, h);
  for (int s = 0; s < 1000; ++s) {
    const Vector v = oracle::random_vector(rng, 3, 3.0);
    const Vector z = j.prox(v, 0.7);
    const auto ref = oracle::enumerate_affine_vi(Matrix::Identity(3, 3), -v, Matrix(0, 3), Vector(0), G, h);
    REQUIRE(ref.has_value());
    CHECK((z - *ref).norm() < 1e-8);
  }
}

TEST_CASE("prox: pointwise ball against bisection route") {
  std::mt19937_64 rng(4);
  Matrix D(2, 3);
  D << 1.0, 0.5, 0.0, 0.0, 2.0, 1.0;
  const auto j = NonsmoothFunctional::pointwise_ball(D, 2);
  for (int s = 0; s < 1000; ++s) {
    const Vector v = oracle::random_vector(rng, 6, 1.5);
    const Vector z = j.prox(v, 1.0);
    for (int b = 0; b < 2; ++b) {
      const Vector ref = bisection_block_projection(v.segment(3 * b, 3), D);
      CHECK((z.segment(3 * b, 3) - ref).norm() < 1e-8);
    }
    CHECK(j.evaluate(z) == 0.0);
  }
}

TEST_CASE("prox: ball complement against a dense angular grid") {
  std::mt19937_64 rng(5);
  const auto j = NonsmoothFunctional::ball_complement(1.0);
  for (int s = 0; s < 1000; ++s) {
    Vector v = oracle::random_vector(rng, 2, 0.8);
    if (v.norm() < 1e-3) continue;
    const Vector z = j.prox(v, 1.0);
    // Minimizer over the circle (only relevant for |v| < 1) by grid + golden refinement.
    double best = kInf, arg = 0.0;
    const int N = 3600;
    for (int k = 0; k < N; ++k) {
      const double th = 2.0 * M_PI * k / N;
      const double val = std::pow(std::cos(th) - v(0), 2) + std::pow(std::sin(th) - v(1), 2);
      if (val < best) {
        best = val;
        arg = th;
      }
    }
    // Bisection on the derivative of the squared distance, which is sharper
    // than comparing function values near the flat minimum.
    auto df = [&](double th) { return v(0) * std::sin(th) - v(1) * std::cos(th); };
    double a = arg - 2.0 * M_PI / N, b = arg + 2.0 * M_PI / N;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if ((df(a) < 0.0) == (df(mid) < 0.0)) a = mid; else b = mid;
    }
    Vector ref = v;
    if (v.norm() < 1.0) ref = Vector(Eigen::Vector2d(std::cos(0.5 * (a + b)), std::sin(0.5 * (a + b))));
    CHECK((z - ref).norm() < 1e-8);
    CHECK(prox_objective(j, z, v, 1.0) <= prox_objective(j, ref, v, 1.0) + 1e-12);
  }
}

TEST_CASE("prox jacobians agree with finite differences away from kinks") {
  std::mt19937_64 rng(6);
  Matrix D(1, 2);
  D << 1.0, 0.5;
  std::vector<NonsmoothFunctional> fs = {
      NonsmoothFunctional::box(Vector::Constant(3, -1.0), Vector::Constant(3, 1.0)),
      NonsmoothFunctional::one_norm(Vector::Constant(3, 0.3)),
      NonsmoothFunctional::pointwise_ball(D, 1),
      NonsmoothFunctional::ball_complement(1.0),
  };
  for (const auto& j : fs) {
    const Eigen::Index n = j.dim() > 0 ? j.dim() : 3;
    for (int s = 0; s < 50; ++s) {
      const Vector v = oracle::random_vector(rng, n, 1.2);
      const Matrix J = j.prox_jacobian(v, 0.8);
      const double h = 1e-7;
      Matrix Jfd(n, n);
      for (Eigen::Index k = 0; k < n; ++k) {
        Vector vp = v, vm = v;
        vp(k) += h;
        vm(k) -= h;
        Jfd.col(k) = (j.prox(vp, 0.8) - j.prox(vm, 0.8)) / (2 * h);
      }
      CHECK((J - Jfd).norm() < 1e-5);
    }
  }
}

TEST_CASE("indicator evaluation and invalid data") {
  const auto box = NonsmoothFunctional::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
  CHECK(box.evaluate(Vector::Constant(2, 0.3)) == 0.0);
  CHECK(box.evaluate(Vector::Constant(2, 1.1)) == kInf);
  CHECK_THROWS_AS(NonsmoothFunctional::box(Vector::Constant(1, 1.0), Vector::Constant(1, 0.0)), Error);
  CHECK_THROWS_AS(NonsmoothFunctional::ball_complement(-1.0), Error);
  CHECK_THROWS_AS(box.prox(Vector::Zero(2), 0.0), Error);
  CHECK(std::string(to_string(box.kind())) == "indicator_box");
}
