#include "vis/fd_harness.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

namespace vis {

std::vector<Scalar> default_t_grid() {
  std::vector<Scalar> t;
  for (int k = 0; k <= 8; ++k) {
    t.push_back(std::pow(10.0, -1.0 - 0.5 * k));
  }
  return t;
}

namespace {

Scalar consistency_margin(const ViProblem& problem, const FdReport& rep, std::size_t k, const ViSolution& sol,
                          const Matrix& Ap, const Matrix& Ax, Scalar jx0, std::mt19937_64& rng, int samples) {
  const Scalar t = rep.t_grid[k];
  const Vector& y = rep.quotients[k];
  const Vector& x0 = rep.x0;
  const Vector& a0 = rep.a0;
  const NonsmoothFunctional& j = problem.nonsmooth;
  const Scalar rhat = rep.taylor_remainders[k];
  const Vector lin = Ap * rep.q + Ax * y;
  auto soq = [&](const Vector& z) { return (j.evaluate(x0 + t * z) - jx0 - t * a0.dot(z)) / (0.5 * t * t); };
  const Scalar soq_y = soq(y);
  const Scalar L = Eigen::JacobiSVD<Matrix>(Ax).singularValues()(0);
  const Scalar round = 1e-14 * (1.0 + std::abs(jx0) + a0.norm() * (1.0 + x0.norm())) / (t * t);

  std::normal_distribution<Scalar> normal;
  Scalar worst = kInf;
  for (int s = 0; s < samples; ++s) {
    Vector v = y;
    const Scalar spread = (1.0 + y.norm()) * std::pow(10.0, -3.0 * s / std::max(samples - 1, 1));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += spread * normal(rng);
    const Vector z = (j.prox(x0 + t * v, t * t) - x0) / t;
    const Scalar dist = (z - y).norm();
    const Scalar value = lin.dot(z - y) + 0.5 * soq(z) - 0.5 * soq_y + rhat * dist;
    const Scalar slack = sol.residual * (L + 1.0 / sol.sigma) * dist / t + round * (1.0 + dist);
    worst = std::min(worst, value + slack);
  }
  return worst;
}

}  // namespace

FdReport run_ray(const ViProblem& problem, const Vector& p0, const Vector& q, std::vector<Scalar> t_grid,
                 const RayOptions& opts) {
  std::sort(t_grid.begin(), t_grid.end(), std::greater<>());
  FdReport rep;
  rep.p0 = p0;
  rep.q = q;
  rep.t_grid = t_grid;

  ViSolverOptions vopts;
  vopts.tol = opts.tol;
  vopts.seed = opts.seed;
  const ViSolution base = solve_elliptic_vi(problem, p0, Vector::Zero(problem.dim_x), vopts);
  rep.x0 = base.x_bar;
  rep.a0 = -problem.op(p0, rep.x0);
  const Matrix Ap = problem.jac_p(p0, rep.x0);
  const Matrix Ax = problem.jac_x(p0, rep.x0);
  const Scalar jx0 = problem.nonsmooth.evaluate(rep.x0);
  const Scalar qn = q.norm();
  std::mt19937_64 rng(opts.seed);

  Vector y_prev = Vector::Zero(problem.dim_x);
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const Scalar t = t_grid[k];
    const Vector p = p0 + t * q;
    ViSolution sol;
    try {
      sol = solve_elliptic_vi(problem, p, rep.x0 + t * y_prev, vopts);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "run_ray at t = " << t << ": " << e.what();
      throw Error(e.code(), msg.str());
    }
    const Vector y = (sol.x_bar - rep.x0) / t;
    y_prev = y;
    rep.quotients.push_back(y);
    rep.residuals.push_back(sol.residual);
    rep.soq_values.push_back((problem.nonsmooth.evaluate(sol.x_bar) - jx0 - rep.a0.dot(sol.x_bar - rep.x0)) /
                             (0.5 * t * t));
    rep.lipschitz_ratios.push_back(qn > 0.0 ? (sol.x_bar - rep.x0).norm() / (t * qn) : 0.0);
    const Vector r = problem.op(p, sol.x_bar) + rep.a0 - t * (Ap * q) - t * (Ax * y);
    rep.taylor_remainders.push_back(r.norm() / t);
    rep.consistency_margins.push_back(
        consistency_margin(problem, rep, k, sol, Ap, Ax, jx0, rng, opts.consistency_samples));
  }
  return rep;
}

Scalar richardson_limit(const std::vector<Scalar>& t, const std::vector<Scalar>& v) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n == 1) return v[0];
  const Scalar t1 = t[n - 2], t2 = t[n - 1];
  return v[n - 1] - t2 * (v[n - 2] - v[n - 1]) / (t1 - t2);
}

std::optional<Scalar> fit_rate(const std::vector<Scalar>& t, const std::vector<Scalar>& errors, Scalar floor) {
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!(errors[k] > floor)) continue;
    const Scalar lx = std::log(t[k]);
    const Scalar ly = std::log(errors[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::nullopt;
  const Scalar den = n * sxx - sx * sx;
  if (den <= 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / den;
}

ConvergenceVerdict verify_convergence(FdReport& report, const Vector& y, const QuadraticSubderivative& Q,
                                      const Matrix& Ax, const ConvergenceOptions& opts) {
  ConvergenceVerdict v;
  const Scalar scale = 1.0 + y.norm();
  const Scalar noise = 1e-10 * scale;
  const Scalar qf = y.dot(Ax * y);
  report.errors.clear();
  report.quadform_gaps.clear();
  for (const Vector& yt : report.quotients) {
    report.errors.push_back((yt - y).norm());
    report.quadform_gaps.push_back(std::abs(yt.dot(Ax * yt) - qf));
  }
  const std::size_t n = report.errors.size();
  if (n == 0) return v;

  v.errors_decreasing = true;
  for (std::size_t k = 1; k < n; ++k) {
    if (report.errors[k] > 1.05 * report.errors[k - 1] + noise) v.errors_decreasing = false;
  }
  v.final_error = report.errors.back();
  v.extrapolated_error = std::max<Scalar>(0.0, richardson_limit(report.t_grid, report.errors));
  v.final_error_ok = v.final_error <= opts.tol_conv * scale;
  v.q_value = Q.form(y);
  v.soq_extrapolated = richardson_limit(report.t_grid, report.soq_values);
  v.soq_ok = std::abs(v.soq_extrapolated - v.q_value) <= opts.tol_soq * (1.0 + std::abs(v.q_value));
  const Scalar ax = Ax.norm();
  v.quadform_ok = report.quadform_gaps.back() <= opts.tol_conv * (1.0 + ax) * scale * scale;
  v.consistency_ok = std::all_of(report.consistency_margins.begin(), report.consistency_margins.end(),
                                 [](Scalar m) { return m >= 0.0; });
  v.fitted_rate = fit_rate(report.t_grid, report.errors, 1e-12 * scale);
  return v;
}

std::string fd_report_csv(const FdReport& report) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "t,error,soq,lipschitz_ratio,quadform_gap\n";
  for (std::size_t k = 0; k < report.t_grid.size(); ++k) {
    auto opt = [&](const std::vector<Scalar>& col) -> std::string {
      if (k >= col.size()) return "";
      std::ostringstream s;
      s << std::setprecision(17) << col[k];
      return s.str();
    };
    out << report.t_grid[k] << ',' << opt(report.errors) << ',' << opt(report.soq_values) << ','
        << opt(report.lipschitz_ratios) << ',' << opt(report.quadform_gaps) << '\n';
  }
  return out.str();
}

}  // namespace vis
