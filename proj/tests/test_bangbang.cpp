#include "doctest.h"
#include "vis/bangbang.hpp"

#include <cmath>
#include <functional>
#include <numbers>

using namespace vis;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

BangBangInstance quadratic_only(Eigen::Index n) {
  BangBangFamily fam;
  fam.target_amplitude = 0.0;
  fam.grid_n = n;
  return make_bangbang_instance(fam);
}

AdjointData single_zero(Scalar z, Scalar slope) {
  AdjointData adj;
  adj.zeros.push_back({z, slope});
  return adj;
}

}  // namespace

TEST_CASE("state and adjoint") {
  SUBCASE("zero control and target") {
    const auto inst = quadratic_only(200);
    const auto st = solve_state_adjoint(inst, {0.0, {}, Vector()});
    CHECK(st.y.norm() == 0.0);
    CHECK(st.phi.norm() == 0.0);
  }
  SUBCASE("constant control") {
    const auto inst = quadratic_only(200);
    const auto st = solve_state_adjoint(inst, {1.0, {}, Vector()});
    const Vector x = inst.nodes();
    const Vector exact = 0.5 * x.array() * (1.0 - x.array());
    CHECK((st.y - exact).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(st.residual <= 1e-12);
  }
  SUBCASE("manufactured solution with a cubic nonlinearity") {
    Scalar prev = kInf;
    for (Eigen::Index n : {50, 100, 200}) {
      BangBangFamily fam;
      fam.f_kind = "cubic";
      fam.f_coeff = 1.0;
      fam.grid_n = n;
      const auto inst = make_bangbang_instance(fam);
      const Vector x = inst.nodes();
      const Vector ystar = (std::numbers::pi * x.array()).sin();
      const Vector u = std::numbers::pi * std::numbers::pi * ystar.array() + ystar.array().cube();
      const auto st = solve_state_adjoint(inst, {0.0, {}, u});
      const Scalar err = (st.y - ystar).lpNorm<Eigen::Infinity>();
      CHECK(err < 1e-2);
      if (std::isfinite(prev)) CHECK(prev / err > 3.5);
      prev = err;
    }
  }
}

TEST_CASE("control load integrates hats exactly") {
  const auto inst = quadratic_only(10);
  BangBangControl u{1.0, {0.33, 0.57}, Vector()};
  const Vector b = control_load(inst, u);
  Scalar integral = 0.33 - (0.57 - 0.33) + (1.0 - 0.57);
  const Scalar boundary = 0.5 * 0.1 * (1.0 + 1.0);
  CHECK(b.sum() == doctest::Approx(integral - boundary).epsilon(1e-12));
}

TEST_CASE("stationary points") {
  SUBCASE("symmetric target gives a switch at 0.5") {
    const auto inst = bangbang_template("linear_tracking");
    auto start = inst;
    start.initial_switches = {0.47};
    const auto adj = find_bangbang_stationary(start);
    REQUIRE(adj.zeros.size() == 1);
    CHECK(std::abs(adj.zeros[0].z - 0.5) < 1e-8);
    CHECK(adj.residual <= 1e-10);
    CHECK(std::abs(adj.zeros[0].slope) > kSlopeMin);
    CHECK(adj.sign_consistent);
    CHECK(std::isfinite(adj.measure_constant));
  }
  SUBCASE("cubic instance") {
    const auto adj = find_bangbang_stationary(bangbang_template("cubic_tracking", 500));
    CHECK(adj.residual <= 1e-10);
    CHECK(adj.sign_consistent);
  }
  SUBCASE("two switches collide") {
    auto inst = bangbang_template("linear_tracking", 200);
    inst.initial_switches = {0.5, 0.5 + 0.5 * inst.h()};
    CHECK(code_of([&] { find_bangbang_stationary(inst); }) == ErrorCode::SwitchCollision);
  }
  SUBCASE("switches move with the perturbation") {
    const auto inst = bangbang_template("linear_tracking", 400);
    const auto base = find_bangbang_stationary(inst);
    const Vector x = inst.nodes();
    BangBangPerturbation p{Vector(), Vector::Ones(x.size())};
    const auto a1 = find_bangbang_stationary(inst, p.scaled(1e-3));
    const auto a2 = find_bangbang_stationary(inst, p.scaled(2e-3));
    const Scalar d1 = a1.zeros[0].z - base.zeros[0].z;
    const Scalar d2 = a2.zeros[0].z - base.zeros[0].z;
    CHECK(std::abs(d1) > 0.0);
    CHECK(std::abs(d2 / d1 - 2.0) < 1e-2);
  }
}

TEST_CASE("curvature form") {
  const auto q = curvature_form(single_zero(0.5, 0.8));
  CHECK(q.form(Vector::Constant(1, 2.0)) == doctest::Approx(1.6));
  CHECK(q.quad(Vector::Zero(1)) == 0.0);
  CHECK(q.cone.kind() == ConeKind::AtomsAtPoints);

  AdjointData two;
  two.zeros = {{0.3, 0.5}, {0.7, -1.0}};
  const auto q2 = curvature_form(two);
  CHECK(q2.bilinear(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.0, 1.0)) == 0.0);
  CHECK(code_of([&] { curvature_form(single_zero(0.5, 1e-4)); }) == ErrorCode::DegenerateSlope);
}

TEST_CASE("second-order data against the Green's function") {
  CHECK(green_product_integral(0.5, 0.5) == doctest::Approx(1.0 / 48.0).epsilon(1e-14));
  Scalar prev = kInf;
  for (Eigen::Index n : {250, 500, 1000, 2000}) {
    const auto inst = quadratic_only(n);
    const auto st = solve_state_adjoint(inst, {0.0, {}, Vector()});
    const Matrix F2 = second_derivative_at_points(inst, st, {0.5, 0.3, 0.71});
    CHECK(F2 == F2.transpose());
    const Scalar err = std::abs(F2(0, 0) - 1.0 / 48.0);
    CHECK(err < 1e-2 / 48.0);
    CHECK(std::abs(F2(1, 2) - green_product_integral(0.3, 0.71)) < 1e-2 * green_product_integral(0.3, 0.71));
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("sensitivity system") {
  auto adj = single_zero(0.5, 0.8);
  const auto mu = solve_sensitivity(adj, Matrix::Constant(1, 1, 1.0 / 48.0), Vector::Constant(1, 0.1));
  CHECK(mu.g(0) == doctest::Approx(-0.1 / (1.0 / 48.0 + 0.4)).epsilon(1e-14));
  CHECK(solve_sensitivity(adj, Matrix::Constant(1, 1, 1.0 / 48.0), Vector::Zero(1)).g(0) == 0.0);
  CHECK(code_of([&] { solve_sensitivity(adj, Matrix::Constant(1, 1, -1.0), Vector::Zero(1)); }) ==
        ErrorCode::NotCoercive);

  const auto inst = bangbang_template("linear_tracking", 400);
  const auto base = find_bangbang_stationary(inst);
  const Vector x = inst.nodes();
  BangBangPerturbation p{Vector(x.array().square()), Vector(x.array().cos())};
  BangBangPerturbation q{Vector(x.array().exp()), Vector()};
  auto g = [&](const BangBangPerturbation& d) {
    const auto s = second_order_data(inst, base, d);
    return solve_sensitivity(base, s.F2, s.Jup_p).g;
  };
  CHECK((g(p + q) - g(p) - g(q)).norm() <= 1e-12 * (1.0 + g(p + q).norm()));
}

TEST_CASE("weak-star difference quotients") {
  const auto inst = bangbang_template("linear_tracking", 2000);
  const auto tests = weakstar_test_family(5);
  CHECK(tests.size() == 10);
  const std::vector<Scalar> t_grid{1e-2, 1e-3, 1e-4};

  SUBCASE("zero direction") {
    const auto rep = weakstar_fd_check(inst, {}, t_grid, tests);
    for (Scalar g : rep.max_gap) CHECK(g == 0.0);
  }
  SUBCASE("seeded direction") {
    const Vector x = inst.nodes();
    BangBangPerturbation dir{Vector(0.3 * (3.0 * x.array()).sin()), Vector((std::numbers::pi * x.array()).cos())};
    const auto rep = weakstar_fd_check(inst, dir, t_grid, tests);
    REQUIRE(rep.max_weight > 0.0);
    CHECK(rep.max_gap.back() <= 1e-2 * rep.max_weight);
    CHECK(rep.velocity_errors.back() <= 1e-3 * rep.max_weight);
    CHECK(rep.max_gap.back() < rep.max_gap.front());
    for (Scalar r : rep.l1_ratios) CHECK(r <= 2.0 * rep.l1_ratios.back() + 1e-12);
    CHECK(weakstar_report_csv(rep).rfind("t,max_gap,l1_ratio,velocity_error\n", 0) == 0);
  }
}

TEST_CASE("quadratic growth and second-order condition") {
  const auto good = bangbang_template("linear_tracking", 500);
  const auto gp = quadratic_growth_probe(good, find_bangbang_stationary(good), 1000, 7);
  CHECK(gp.min_eigenvalue > 0.0);
  CHECK(gp.fitted_c > 0.0);
  CHECK(gp.samples == 1000);

  const auto bad = bangbang_template("indefinite_tracking", 500);
  const auto adj = find_bangbang_stationary(bad);
  CHECK(adj.sign_consistent);
  const auto bp = quadratic_growth_probe(bad, adj, 1000, 8);
  CHECK(bp.min_eigenvalue < 0.0);
  CHECK(bp.fitted_c < 0.0);
}

TEST_CASE("Taylor defects and the adjoint gradient") {
  const auto inst = bangbang_template("cubic_tracking", 400);
  const Vector x = inst.nodes();
  const BangBangControl u{1.0, {0.5}, Vector()};
  const Vector v = (2.0 * x.array()).sin();
  const auto d = taylor_defects(inst, u, v, {1e-1, 1e-2, 1e-3});
  CHECK(d[1] < d[0]);
  CHECK(d[2] < d[1]);
  CHECK(d[2] < 1e-3);
  CHECK(adjoint_gradient_check(inst, 100, 9) <= 1e-6);
  CHECK(adjoint_gradient_check(bangbang_template("linear_tracking", 400), 100, 10) <= 1e-6);
}

TEST_CASE("templates and instance validation") {
  const auto& t = bangbang_templates();
  REQUIRE(t.size() == 3);
  CHECK(t[0].id == "linear_tracking");
  CHECK(code_of([] { bangbang_template("nope"); }) == ErrorCode::InvalidArgument);
  BangBangFamily bad;
  bad.f_coeff = -1.0;
  CHECK(code_of([&] { make_bangbang_instance(bad); }) == ErrorCode::InvalidInstance);
}
