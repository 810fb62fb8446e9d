#include "doctest.h"
#include "oracles.hpp"
#include "vis/fd_harness.hpp"

#include <algorithm>
#include <cmath>

using namespace vis;

namespace {

ViProblem box_projection() {
  return make_affine_tanh_problem(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Zero(2), 0.0,
                                  NonsmoothFunctional::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)));
}

struct RayCase {
  FdReport report;
  DerivativeSolution derivative;
  QuadraticSubderivative Q;
  Matrix Ax;
};

RayCase analyse(const ViProblem& prob, const Vector& p0, const Vector& q) {
  FdReport rep = run_ray(prob, p0, q, default_t_grid());
  const Matrix Ap = prob.jac_p(p0, rep.x0);
  const Matrix Ax = prob.jac_x(p0, rep.x0);
  auto Q = catalog_subderivative(prob.nonsmooth, rep.x0, rep.a0);
  auto d = solve_derivative_vi(Ap, Ax, Q, q);
  return {std::move(rep), std::move(d), std::move(Q), Ax};
}

}  // namespace

TEST_CASE("run_ray: box projection is piecewise linear") {
  auto c = analyse(box_projection(), Eigen::Vector2d(2.0, 0.5), Eigen::Vector2d(1.0, 1.0));
  for (const Vector& yt : c.report.quotients) CHECK((yt - Vector(Eigen::Vector2d(0.0, 1.0))).norm() < 1e-9);
  CHECK((c.derivative.y - Vector(Eigen::Vector2d(0.0, 1.0))).norm() < 1e-14);
  const auto v = verify_convergence(c.report, c.derivative.y, c.Q, c.Ax);
  CHECK(v.pass());
  CHECK(v.final_error < 1e-9);
  CHECK(std::abs(v.soq_extrapolated) < 1e-4);
  CHECK(std::is_sorted(c.report.t_grid.rbegin(), c.report.t_grid.rend()));
}

TEST_CASE("run_ray: zero direction") {
  auto rep = run_ray(box_projection(), Eigen::Vector2d(2.0, 0.5), Vector::Zero(2), default_t_grid());
  for (const Vector& yt : rep.quotients) CHECK(yt.norm() == 0.0);
  for (Scalar r : rep.lipschitz_ratios) CHECK(r == 0.0);
}

TEST_CASE("run_ray: soft thresholding stays at zero") {
  auto prob = make_affine_tanh_problem(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Vector::Zero(1), 0.0,
                                       NonsmoothFunctional::one_norm(Vector::Ones(1)));
  auto rep = run_ray(prob, Vector::Constant(1, 0.5), Vector::Ones(1), default_t_grid());
  for (const Vector& yt : rep.quotients) CHECK(std::abs(yt(0)) < 1e-12);
}

TEST_CASE("verify_convergence: negated derivative fails") {
  auto c = analyse(box_projection(), Eigen::Vector2d(2.0, 0.5), Eigen::Vector2d(1.0, 1.0));
  const auto v = verify_convergence(c.report, -c.derivative.y, c.Q, c.Ax);
  CHECK_FALSE(v.pass());
  CHECK_FALSE(v.final_error_ok);
}

TEST_CASE("run_ray: nonlinear operators converge at first order") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::Index n = 3;
    Matrix M = oracle::random_spd(rng, n);
    if (trial % 2) {
      const Matrix R = oracle::random_matrix(rng, n, n);
      M += 0.5 * (R - R.transpose());
    }
    NonsmoothFunctional j = trial < 2   ? NonsmoothFunctional::box(Vector::Constant(n, -0.5), Vector::Constant(n, 0.5))
                            : trial < 4 ? NonsmoothFunctional::one_norm(Vector::Constant(n, 0.7))
                                        : NonsmoothFunctional::polyhedron(oracle::random_matrix(rng, 4, n), Vector::Constant(4, 0.5));
    auto prob = make_affine_tanh_problem(M, oracle::random_matrix(rng, n, 2), Vector::Zero(n), 0.8, j);
    const Vector p0 = oracle::random_vector(rng, 2, 2.0);
    const Vector q = oracle::random_vector(rng, 2);
    auto c = analyse(prob, p0, q);
    const auto v = verify_convergence(c.report, c.derivative.y, c.Q, c.Ax, {1e-4, 1e-3});
    CHECK(v.final_error_ok);
    CHECK(v.soq_ok);
    CHECK(v.consistency_ok);
    CHECK(v.errors_decreasing);
    if (v.fitted_rate) CHECK(*v.fitted_rate > 0.8);
  }
}

TEST_CASE("fd_report_csv") {
  FdReport r;
  r.t_grid = {0.1, 0.01};
  r.soq_values = {1.0, 2.0};
  r.lipschitz_ratios = {0.5, 0.5};
  const std::string csv = fd_report_csv(r);
  CHECK(csv.rfind("t,error,soq,lipschitz_ratio,quadform_gap\n", 0) == 0);
  CHECK(csv.find("0.10000000000000001,,1,0.5,\n") != std::string::npos);
}

TEST_CASE("richardson and rate fit") {
  const std::vector<Scalar> t{1e-2, 1e-3};
  CHECK(richardson_limit(t, {3.0 + 2e-2, 3.0 + 2e-3}) == doctest::Approx(3.0).epsilon(1e-12));
  const auto rate = fit_rate({1e-1, 1e-2, 1e-3}, {1e-2, 1e-4, 1e-6}, 0.0);
  REQUIRE(rate);
  CHECK(*rate == doctest::Approx(2.0));
  CHECK_FALSE(fit_rate({1e-1, 1e-2}, {0.0, 0.0}, 1e-12));
}
