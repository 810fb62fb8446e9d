#include "doctest.h"
#include "oracles.hpp"
#include "vis/vi.hpp"

using namespace vis;

namespace {

ViProblem shifted_identity(Eigen::Index n, NonsmoothFunctional j) {
  return make_affine_tanh_problem(Matrix::Identity(n, n), Matrix::Identity(n, n), Vector::Zero(n), 0.0,
                                  std::move(j));
}

}  // namespace

TEST_CASE("solve_elliptic_vi: box projection") {
  auto prob = shifted_identity(2, NonsmoothFunctional::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)));
  const Vector p = Eigen::Vector2d(2.0, 0.5);
  const auto sol = solve_elliptic_vi(prob, p, Vector::Zero(2));
  CHECK((sol.x_bar - Vector(Eigen::Vector2d(1.0, 0.5))).norm() < 1e-12);
  CHECK(sol.residual <= 1e-10);
  CHECK(std::abs(sol.residual - vi_residual(prob, p, sol.x_bar, sol.sigma)) < 1e-15);
}

TEST_CASE("solve_elliptic_vi: soft thresholding") {
  auto prob = shifted_identity(1, NonsmoothFunctional::one_norm(Vector::Ones(1)));
  const auto sol = solve_elliptic_vi(prob, Vector::Constant(1, 0.5), Vector::Constant(1, 3.0));
  CHECK(std::abs(sol.x_bar(0)) < 1e-12);
}

TEST_CASE("solve_elliptic_vi: SPD box QP against 3^n enumeration") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix M = oracle::random_spd(rng, 3);
    const Vector lo = Vector::Zero(3), hi = Vector::Ones(3);
    auto prob = make_affine_tanh_problem(M, Matrix::Identity(3, 3), Vector::Zero(3), 0.0,
                                         NonsmoothFunctional::box(lo, hi));
    const Vector p = oracle::random_vector(rng, 3, 2.0);
    const auto sol = solve_elliptic_vi(prob, p, Vector::Zero(3));
    const auto ref = oracle::enumerate_box_qp(M, -p, lo, hi);
    REQUIRE(ref.has_value());
    CHECK((sol.x_bar - *ref).norm() < 1e-10);
  }
}

TEST_CASE("solve_elliptic_vi: unique solution from different starts, nonsymmetric operator") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 4;
    const Matrix S = oracle::random_spd(rng, n);
    const Matrix R = oracle::random_matrix(rng, n, n);
    const Matrix M = S + 0.5 * (R - R.transpose());
    std::vector<NonsmoothFunctional> js = {
        NonsmoothFunctional::box(Vector::Constant(n, -0.5), Vector::Constant(n, 0.5)),
        NonsmoothFunctional::one_norm(Vector::Constant(n, 0.4)),
        NonsmoothFunctional::polyhedron(oracle::random_matrix(rng, 3, n), Vector::Constant(3, 0.5)),
    };
    for (const auto& j : js) {
      auto prob = make_affine_tanh_problem(M, oracle::random_matrix(rng, n, 2), Vector::Zero(n), 0.3, j);
      const Vector p = oracle::random_vector(rng, 2);
      const auto a = solve_elliptic_vi(prob, p, Vector::Zero(n));
      const auto b = solve_elliptic_vi(prob, p, oracle::random_vector(rng, n, 3.0));
      CHECK((a.x_bar - b.x_bar).norm() < 1e-9);
    }
  }
}

TEST_CASE("solution map is Lipschitz with constant C/c") {
  std::mt19937_64 rng(13);
  const Eigen::Index n = 5;
  const Matrix M = oracle::random_spd(rng, n);
  const Matrix B = oracle::random_matrix(rng, n, 3);
  auto prob = make_affine_tanh_problem(M, B, Vector::Zero(n), 0.2,
                                       NonsmoothFunctional::box(Vector::Constant(n, -1.0), Vector::Constant(n, 1.0)));
  const double c = prob.monotonicity;
  const double C = Eigen::JacobiSVD<Matrix>(B).singularValues()(0);
  for (int s = 0; s < 50; ++s) {
    const Vector p1 = oracle::random_vector(rng, 3, 2.0);
    const Vector p2 = p1 + oracle::random_vector(rng, 3, 0.3);
    const Vector x1 = solve_elliptic_vi(prob, p1, Vector::Zero(n)).x_bar;
    const Vector x2 = solve_elliptic_vi(prob, p2, Vector::Zero(n)).x_bar;
    CHECK((x1 - x2).norm() <= (C / c) * (p1 - p2).norm() * (1.0 + 1e-9));
  }
}

TEST_CASE("vi_residual examples") {
  auto prob = shifted_identity(2, NonsmoothFunctional::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)));
  const Vector p = Eigen::Vector2d(0.3, -0.2);
  CHECK(vi_residual(prob, p, p) == 0.0);
  const Vector p_act = Eigen::Vector2d(2.0, 0.5);
  const Vector xbar = Eigen::Vector2d(1.0, 0.5);
  CHECK(vi_residual(prob, p_act, xbar) < 1e-15);
  // Moving along the active face changes the residual by exactly the shift.
  const Vector xpert = xbar + Vector(Eigen::Vector2d(0.0, 0.1));
  CHECK(std::abs(vi_residual(prob, p_act, xpert) - 0.1) < 1e-14);
  // Moving off the face into the interior is detected too.
  const Vector xin = xbar - Vector(Eigen::Vector2d(0.1, 0.0));
  CHECK(vi_residual(prob, p_act, xin) > 0.0);
}

TEST_CASE("jacobian self check and sampled monotonicity") {
  std::mt19937_64 rng(14);
  const Matrix M = oracle::random_spd(rng, 4);
  auto prob = make_affine_tanh_problem(M, oracle::random_matrix(rng, 4, 2), oracle::random_vector(rng, 4), 0.7,
                                       NonsmoothFunctional::one_norm(Vector::Ones(4)));
  const Vector p = oracle::random_vector(rng, 2);
  const Vector x = oracle::random_vector(rng, 4);
  CHECK(jacobian_self_check(prob, p, x) < 1e-5);
  CHECK(sampled_monotonicity(prob, p, x, 3) >= prob.monotonicity - 1e-12);
}

TEST_CASE("solver errors") {
  auto prob = shifted_identity(2, NonsmoothFunctional::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)));
  prob.monotonicity = 0.0;
  CHECK_THROWS_AS(solve_elliptic_vi(prob, Vector::Zero(2), Vector::Zero(2)), Error);
  prob.monotonicity = 1.0;
  ViSolverOptions opts;
  opts.max_iters = 1;
  opts.semismooth = false;
  opts.sigma = 1e-3;
  try {
    solve_elliptic_vi(prob, Vector::Constant(2, 5.0), Vector::Zero(2), opts);
    FAIL("expected NonConvergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonConvergence);
  }
}
