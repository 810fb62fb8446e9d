// Acceptance suite: one PASS/FAIL line per criterion.

#include "experiment.hpp"
#include "oracles.hpp"
#include "vis/bangbang.hpp"
#include "vis/derivative.hpp"
#include "vis/fd_harness.hpp"
#include "vis/plasticity.hpp"
#include "vis/proxreg.hpp"
#include "vis/subderivative.hpp"
#include "vis/vi.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace vis;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

/// budget_s <= 0 means no runtime limit.
void report(int id, const std::string& name, const std::function<Outcome()>& body, double budget_s = 0.0) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_s > 0.0 && secs > budget_s) {
    o.pass = false;
    o.detail += "; over the " + std::to_string(static_cast<int>(budget_s)) + " s budget";
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d %s %s: %s (%.2f s)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

struct EllipticCase {
  ViProblem problem;
  Vector p0;
  Vector q;
};

/// 50 seeded instances: dims 2..10, box / polyhedron / one norm, symmetric
/// and nonsymmetric operators.
std::vector<EllipticCase> elliptic_cases() {
  std::vector<EllipticCase> cases;
  for (int k = 0; k < 50; ++k) {
    std::mt19937_64 rng(1000 + k);
    const Eigen::Index n = 2 + k % 9;
    const Eigen::Index dp = 3;
    Matrix M = oracle::random_spd(rng, n);
    if ((k / 3) % 2 == 1) {
      const Matrix R = oracle::random_matrix(rng, n, n);
      M += 0.5 * (R - R.transpose());
    }
    NonsmoothFunctional j = k % 3 == 0   ? NonsmoothFunctional::box(Vector::Constant(n, -0.5), Vector::Constant(n, 0.5))
                            : k % 3 == 1 ? NonsmoothFunctional::one_norm(Vector::Constant(n, 0.7))
                                         : NonsmoothFunctional::polyhedron(oracle::random_matrix(rng, n + 2, n),
                                                                           Vector::Constant(n + 2, 0.5));
    const Scalar kappa = k % 2 == 0 ? 0.0 : 0.8;
    ViProblem prob = make_affine_tanh_problem(M, oracle::random_matrix(rng, n, dp), Vector::Zero(n), kappa, j);
    const Vector p0 = oracle::random_vector(rng, dp, 2.0);
    const Vector q = oracle::random_vector(rng, dp);
    cases.push_back({std::move(prob), p0, q});
  }
  return cases;
}

struct Analysed {
  Matrix Ap, Ax;
  QuadraticSubderivative Q;
  DerivativeSolution d;
  Vector x0;
};

Analysed analyse(const EllipticCase& c) {
  ViSolverOptions so;
  so.tol = 1e-13;
  const auto sol = solve_elliptic_vi(c.problem, c.p0, Vector::Zero(c.problem.dim_x), so);
  const Matrix Ap = c.problem.jac_p(c.p0, sol.x_bar);
  const Matrix Ax = c.problem.jac_x(c.p0, sol.x_bar);
  auto Q = catalog_subderivative(c.problem.nonsmooth, sol.x_bar, -c.problem.op(c.p0, sol.x_bar));
  auto d = solve_derivative_vi(Ap, Ax, Q, c.q);
  return {Ap, Ax, std::move(Q), std::move(d), sol.x_bar};
}

Outcome criterion1() {
  const auto cases = elliptic_cases();
  Scalar worst_gap = 0.0, worst_vi = kInf;
  int ok = 0;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto a = analyse(cases[k]);
    const auto nec = check_necessary_conditions(a.d, a.Q, a.Ap, a.Ax, k, 1000);
    worst_gap = std::max(worst_gap, nec.value_identity_gap);
    worst_vi = std::min(worst_vi, nec.min_linearized_vi);
    if (nec.value_identity_gap <= 1e-8 && nec.min_linearized_vi >= -1e-8 && nec.y_in_cone) ++ok;
  }
  return {ok == 50, std::to_string(ok) + "/50 instances, max identity gap " + sci(worst_gap) +
                        ", min linearized VI " + sci(worst_vi)};
}

Outcome criterion2() {
  const auto cases = elliptic_cases();
  int ok = 0;
  Scalar worst_err = 0.0, worst_soq = 0.0;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto a = analyse(cases[k]);
    RayOptions ro;
    ro.seed = k;
    FdReport rep = run_ray(cases[k].problem, cases[k].p0, cases[k].q, default_t_grid(), ro);
    const auto v = verify_convergence(rep, a.d.y, a.Q, a.Ax, {1e-4, 1e-3});
    worst_err = std::max(worst_err, v.final_error / (1.0 + a.d.y.norm()));
    worst_soq = std::max(worst_soq, std::abs(v.soq_extrapolated - v.q_value));
    if (v.final_error_ok && v.soq_ok) ++ok;
  }
  return {ok == 50, std::to_string(ok) + "/50 rays, max |y_t - y|/(1+|y|) at t=1e-5 " + sci(worst_err) +
                        ", max |soq - Q(y)| " + sci(worst_soq)};
}

struct OracleCase {
  NonsmoothFunctional j;
  Vector x, g;
};

std::vector<std::pair<std::string, std::vector<OracleCase>>> oracle_cases() {
  std::vector<std::pair<std::string, std::vector<OracleCase>>> out;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<Scalar> U(0.0, 1.0);

  std::vector<OracleCase> box;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Index d = 1 + c % 3;
    Vector x = oracle::random_vector(rng, d, 0.5);
    Vector g = Vector::Zero(d);
    x(0) = 1.0;
    g(0) = c == 3 ? 0.0 : 1.0 + U(rng);
    if (d > 1) {
      x(1) = -1.0;
      g(1) = c == 2 ? 0.0 : -U(rng) - 0.1;
    }
    box.push_back({NonsmoothFunctional::box(Vector::Constant(d, -1.0), Vector::Constant(d, 1.0)), x, g});
  }
  out.emplace_back("box", box);

  std::vector<OracleCase> poly;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Index d = 2 + c % 2;
    const Matrix G = oracle::random_matrix(rng, d + 1, d);
    const Vector x = oracle::random_vector(rng, d, 0.5);
    Vector h = G * x;
    h.tail(d + 1 - 2).array() += 0.5;
    const Vector g = (1.0 + U(rng)) * G.row(0).transpose() + (c % 2 == 0 ? 0.0 : U(rng)) * G.row(1).transpose();
    poly.push_back({NonsmoothFunctional::polyhedron(G, h), x, g});
  }
  out.emplace_back("polyhedron", poly);

  std::vector<OracleCase> l1;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Index d = 1 + c % 3;
    const Vector w = Vector::Constant(d, 0.5) + oracle::random_vector(rng, d, 0.2).cwiseAbs();
    Vector x = Vector::Zero(d);
    Vector g(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (i == 0 && c % 2 == 1) {
        x(i) = 0.4;
        g(i) = w(i);
      } else {
        g(i) = (i + c) % 3 == 0 ? w(i) : (2.0 * U(rng) - 1.0) * w(i);
      }
    }
    l1.push_back({NonsmoothFunctional::one_norm(w), x, g});
  }
  out.emplace_back("one_norm", l1);

  std::vector<OracleCase> ball;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Index m = 2 + c % 2;
    const Matrix D = oracle::random_matrix(rng, m, m) + 2.0 * Matrix::Identity(m, m);
    Vector x = oracle::random_vector(rng, m);
    const Scalar lambda = c == 0 ? 0.0 : 0.5 * c;
    x /= (D * x).norm();
    if (c == 3) x *= 0.5;
    const Vector g = c == 3 ? Vector(Vector::Zero(m)) : Vector(lambda * D.transpose() * D * x);
    ball.push_back({NonsmoothFunctional::pointwise_ball(D, 1), x, g});
  }
  out.emplace_back("pointwise_ball", ball);

  std::vector<OracleCase> comp;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Index d = 2 + c % 2;
    Vector x = oracle::random_vector(rng, d);
    x.normalize();
    const Scalar alpha = c == 0 ? 0.0 : 0.3 * c;
    comp.push_back({NonsmoothFunctional::ball_complement(1.0), x, -alpha * x});
  }
  out.emplace_back("ball_complement", comp);
  return out;
}

Outcome criterion3() {
  std::mt19937_64 rng(99);
  int total = 0, ok = 0;
  Scalar worst = 0.0;
  std::ostringstream per_kind;
  for (const auto& [kind, cases] : oracle_cases()) {
    int kind_ok = 0, kind_total = 0;
    for (const auto& c : cases) {
      const auto Q = catalog_subderivative(c.j, c.x, c.g);
      for (int k = 0; k < 10; ++k) {
        Vector z = oracle::random_vector(rng, c.x.size());
        if (k % 2 == 0) z = Q.cone.project(z);
        const Scalar expected = Q.quad(z);
        const Scalar got = q_bruteforce_oracle(c.j, c.x, c.g, z);
        bool agree;
        if (std::isinf(expected)) {
          agree = std::isinf(got);
        } else {
          const Scalar rel = std::abs(got - expected) / std::max<Scalar>(1.0, std::abs(expected));
          worst = std::max(worst, rel);
          agree = std::isfinite(got) && rel <= 1e-3;
        }
        ++kind_total;
        if (agree) ++kind_ok;
      }
    }
    per_kind << " " << kind << " " << kind_ok << "/" << kind_total;
    total += kind_total;
    ok += kind_ok;
  }
  return {ok == total && total == 200,
          std::to_string(ok) + "/" + std::to_string(total) + " directions agree, max finite rel. gap " + sci(worst) +
              ";" + per_kind.str()};
}

Outcome criterion4() {
  Scalar worst_sigma = 0.0, worst_u = 0.0, worst_kkt = 0.0, worst_cv = 0.0, worst_lip = 0.0;
  bool ok = true;
  for (int k = 0; k < 10; ++k) {
    const auto inst = random_plasticity_instance(300 + k, 8 + k, 3, 2, 3);
    const Vector ell = random_plastic_load(inst, 400 + k, 3.0);
    std::mt19937_64 rng(500 + k);
    const Vector dell = oracle::random_vector(rng, inst.dim_v());
    const auto s = solve_saddle(inst, ell);
    const auto fd = plasticity_fd_check(inst, ell, dell, {1e-2, 1e-3, 1e-4, 1e-5});
    const auto ratios = plasticity_lipschitz_samples(inst, ell, 600 + k, 100, 0.2);
    const Scalar cv = batch_max_variation(ratios, 5);
    const Scalar lip = *std::max_element(ratios.begin(), ratios.end());
    const Scalar kkt = std::max(s.kkt_residual, multiplier_identity_residual(inst, s));
    worst_sigma = std::max(worst_sigma, fd.sigma_errors.back());
    worst_u = std::max(worst_u, fd.u_errors.back());
    worst_kkt = std::max(worst_kkt, kkt);
    worst_cv = std::max(worst_cv, cv);
    worst_lip = std::max(worst_lip, lip);
    ok = ok && fd.sigma_errors.back() <= 1e-5 && fd.u_errors.back() <= 1e-5 && kkt <= 1e-9 && std::isfinite(lip) &&
         cv < 0.2;
  }
  return {ok, "10 instances, max sigma error " + sci(worst_sigma) + ", max u error " + sci(worst_u) + ", max KKT " +
                  sci(worst_kkt) + ", max Lipschitz " + sci(worst_lip) + ", max batch CV " + sci(worst_cv)};
}

Outcome criterion5() {
  const auto K = ProxRegularSet::ball_complement(2, 1.0);
  const std::vector<Scalar> rhos{0.25, 0.5, 0.75};
  bool ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    const Scalar l = lipschitz_probe(K, rhos[i], 10000, 700 + i);
    const Scalar bound = lipschitz_rank_bound(K, rhos[i]);
    ok = ok && l <= bound + 1e-6;
    d << "rho " << rhos[i] << ": " << sci(l) << " <= " << sci(bound) << "; ";
  }
  const Scalar margin = prox_regularity_margin(K, 0.75, 10000, 710);
  const Scalar recast = recast_inequality_margin(K, 0.75, 10000, 711);
  const auto seg = segment_differentiability_check(K, Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0), rhos, 712);
  bool all_diff = true;
  for (bool b : seg.differentiable) all_diff = all_diff && b;
  ok = ok && margin >= -1e-9 && recast >= -1e-9 && seg.consistent && all_diff;
  d << "inequality margin " << sci(margin) << ", recast " << sci(recast) << ", segment verdicts "
    << (seg.consistent ? "agree" : "disagree");
  return {ok, d.str()};
}

Outcome criterion6() {
  std::ostringstream d;
  bool ok = true;
  Scalar prev = kInf;
  const Scalar exact = green_product_integral(0.5, 0.5);
  for (Eigen::Index n : {250, 500, 1000, 2000}) {
    const auto inst = bangbang_template("linear_tracking", n);
    const auto adj = find_bangbang_stationary(inst);
    const auto sod = second_order_data(inst, adj, {});
    const Scalar err = std::abs(sod.F2(0, 0) - exact) / exact;
    ok = ok && err <= prev;
    prev = err;
  }
  ok = ok && prev <= 1e-2;
  d << "F''[d.5,d.5] rel. error at n=2000 " << sci(prev) << " (decreasing under refinement); ";

  const auto inst = bangbang_template("linear_tracking", 2000);
  const Vector x = inst.nodes();
  const BangBangPerturbation dir{Vector(0.3 * (3.0 * std::numbers::pi * x.array()).sin()),
                                 Vector((std::numbers::pi * x.array()).cos())};
  const auto rep = weakstar_fd_check(inst, dir, {1e-2, 1e-3, 1e-4}, weakstar_test_family(13));
  const Scalar gap = rep.max_gap.back();
  const Scalar l1max = *std::max_element(rep.l1_ratios.begin(), rep.l1_ratios.end());
  const Scalar l1min = *std::min_element(rep.l1_ratios.begin(), rep.l1_ratios.end());
  ok = ok && rep.max_weight > 0.0 && gap <= 1e-2 * rep.max_weight && std::isfinite(l1max) && l1max <= 2.0 * l1min;
  d << "weak-* gap at t=1e-4 " << sci(gap) << " vs max|g| " << sci(rep.max_weight) << "; L1 ratios in [" << sci(l1min)
    << ", " << sci(l1max) << "]; ";

  const auto adj = find_bangbang_stationary(inst);
  const BangBangPerturbation other{Vector(x.array().square()), Vector(x.array().exp())};
  auto g = [&](const BangBangPerturbation& p) {
    const auto s = second_order_data(inst, adj, p);
    return solve_sensitivity(adj, s.F2, s.Jup_p).g;
  };
  const Vector gs = g(dir + other);
  const Scalar lin = (gs - g(dir) - g(other)).norm() / (1.0 + gs.norm());
  ok = ok && lin <= 1e-12;
  d << "linearity defect " << sci(lin);
  return {ok, d.str()};
}

Outcome criterion7() {
  const std::vector<std::string> configs{"box_projection",          "nonsymmetric_polyhedron", "plasticity",
                                         "proxreg_ball_complement", "proxreg_union",           "bangbang_linear",
                                         "bangbang_cubic"};
  int identical = 0;
  for (const auto& name : configs) {
    const auto cfg = cli::load_config(std::string(VIS_SOURCE_DIR) + "/configs/" + name + ".json");
    const auto a = cli::run_experiment(cfg, {cli::Command::Verify, std::nullopt, 1});
    const auto b = cli::run_experiment(cfg, {cli::Command::Verify, std::nullopt, 3});
    if (a.report.dump() == b.report.dump() && a.csv == b.csv) ++identical;
  }
  return {identical == static_cast<int>(configs.size()),
          std::to_string(identical) + "/" + std::to_string(configs.size()) +
              " bundled configs give byte-identical reports and CSV across reruns (jobs 1 and 3)"};
}

}  // namespace

int main() {
  report(1, "derivative-VI identity suite", criterion1, 10.0);
  report(2, "finite-difference convergence suite", criterion2, 60.0);
  report(3, "brute-force oracle equivalence", criterion3, 120.0);
  report(4, "elastoplasticity", criterion4);
  report(5, "prox-regular projection", criterion5);
  report(6, "bang-bang control", criterion6);
  report(7, "determinism", criterion7);
  return failures == 0 ? 0 : 1;
}
