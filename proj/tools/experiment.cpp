#include "experiment.hpp"

#include "vis/bangbang.hpp"
#include "vis/derivative.hpp"
#include "vis/fd_harness.hpp"
#include "vis/plasticity.hpp"
#include "vis/proxreg.hpp"
#include "vis/subderivative.hpp"
#include "vis/vi.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace vis::cli {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

void check_object(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) config_error(ctx + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) config_error(ctx + ": unknown field '" + key + "'");
  }
}

const json& require(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) config_error(ctx + ": missing field '" + key + "'");
  return j.at(key);
}

Scalar get_number(const json& j, const std::string& ctx) {
  if (!j.is_number()) config_error(ctx + ": expected a number");
  return j.get<Scalar>();
}

std::int64_t get_int(const json& j, const std::string& ctx) {
  if (!j.is_number_integer()) config_error(ctx + ": expected an integer");
  return j.get<std::int64_t>();
}

Vector get_vector(const json& j, const std::string& ctx) {
  if (!j.is_array()) config_error(ctx + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_number(j[i], ctx);
  return v;
}

std::vector<Scalar> get_list(const json& j, const std::string& ctx) {
  const Vector v = get_vector(j, ctx);
  return {v.data(), v.data() + v.size()};
}

Matrix get_matrix(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) config_error(ctx + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vector r = get_vector(j[static_cast<std::size_t>(i)], ctx);
    if (r.size() != cols) config_error(ctx + ": ragged matrix");
    M.row(i) = r.transpose();
  }
  return M;
}

void require_size(const Vector& v, Eigen::Index n, const std::string& ctx) {
  if (v.size() != n) config_error(ctx + ": expected length " + std::to_string(n));
}

json to_json(const Vector& v) { return std::vector<Scalar>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) rows.push_back(to_json(Vector(M.row(i).transpose())));
  return rows;
}

json maybe(const std::optional<Scalar>& v) { return v ? json(*v) : json(nullptr); }

struct Tolerances {
  Scalar tol_conv = 1e-6;
  Scalar tol_soq = 1e-4;
};

struct RayOutcome {
  json result;
  std::string csv;
  bool pass = true;
};

class Verdicts {
 public:
  void add(const std::string& name, bool ok) {
    v_[name] = ok;
    pass_ = pass_ && ok;
  }
  bool pass() const { return pass_; }
  json to_json() const { return v_; }

 private:
  json v_ = json::object();
  bool pass_ = true;
};

void finish(RayOutcome& out, const Verdicts& v) {
  out.result["verdicts"] = v.to_json();
  out.result["pass"] = v.pass();
  out.pass = v.pass();
}

std::string prefix_rows(std::size_t id, const std::vector<std::string>& rows) {
  std::string s;
  for (const auto& r : rows) s += std::to_string(id) + "," + r + "\n";
  return s;
}

std::vector<std::string> csv_body(const std::string& csv) {
  std::vector<std::string> rows;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) rows.push_back(line);
  return rows;
}

std::string fmt(Scalar x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

std::vector<Scalar> ray_t_grid(const json& ray, const std::string& ctx) {
  if (!ray.contains("t_grid")) return default_t_grid();
  auto t = get_list(ray.at("t_grid"), ctx + ".t_grid");
  if (t.empty() || std::any_of(t.begin(), t.end(), [](Scalar x) { return !(x > 0.0); }))
    config_error(ctx + ".t_grid: entries must be positive");
  return t;
}

/// Shared state of one application: instance summary, CSV header, ray runner
/// and an optional instance-level suite run by verify.
struct Application {
  json instance;
  std::string csv_header;
  std::size_t ray_count = 0;
  std::function<RayOutcome(std::size_t, Command, std::uint64_t)> ray;
  std::function<RayOutcome(std::uint64_t)> suite;
};

// ---------------------------------------------------------------- generic VI

NonsmoothFunctional parse_nonsmooth(const json& j, const std::string& ctx) {
  if (!j.is_object()) config_error(ctx + ": expected an object");
  const std::string kind = require(j, "kind", ctx).get<std::string>();
  if (kind == "box") {
    check_object(j, {"kind", "lower", "upper"}, ctx);
    return NonsmoothFunctional::box(get_vector(require(j, "lower", ctx), ctx + ".lower"),
                                    get_vector(require(j, "upper", ctx), ctx + ".upper"));
  }
  if (kind == "polyhedron") {
    check_object(j, {"kind", "G", "h"}, ctx);
    return NonsmoothFunctional::polyhedron(get_matrix(require(j, "G", ctx), ctx + ".G"),
                                           get_vector(require(j, "h", ctx), ctx + ".h"));
  }
  if (kind == "one_norm") {
    check_object(j, {"kind", "weights"}, ctx);
    return NonsmoothFunctional::one_norm(get_vector(require(j, "weights", ctx), ctx + ".weights"));
  }
  if (kind == "pointwise_ball") {
    check_object(j, {"kind", "D", "blocks"}, ctx);
    return NonsmoothFunctional::pointwise_ball(get_matrix(require(j, "D", ctx), ctx + ".D"),
                                               get_int(require(j, "blocks", ctx), ctx + ".blocks"));
  }
  if (kind == "ball_complement") {
    check_object(j, {"kind", "radius"}, ctx);
    return NonsmoothFunctional::ball_complement(get_number(require(j, "radius", ctx), ctx + ".radius"));
  }
  config_error(ctx + ": unknown nonsmooth kind '" + kind + "'");
}

Application generic_vi(const json& cfg, const Tolerances& tol) {
  const json& inst = require(cfg, "instance", "config");
  check_object(inst, {"M", "B", "offset", "kappa", "nonsmooth"}, "instance");
  const Matrix M = get_matrix(require(inst, "M", "instance"), "instance.M");
  const Matrix B = get_matrix(require(inst, "B", "instance"), "instance.B");
  const Eigen::Index n = M.rows();
  if (M.cols() != n || B.rows() != n) config_error("instance: M must be n x n and B n x dim_p");
  const Vector offset = inst.contains("offset") ? get_vector(inst["offset"], "instance.offset") : Vector::Zero(n);
  require_size(offset, n, "instance.offset");
  const Scalar kappa = inst.contains("kappa") ? get_number(inst["kappa"], "instance.kappa") : 0.0;
  if (kappa < 0.0) config_error("instance.kappa: must be nonnegative");
  auto j = parse_nonsmooth(require(inst, "nonsmooth", "instance"), "instance.nonsmooth");
  if (j.dim() >= 0 && j.dim() != n) config_error("instance.nonsmooth: dimension does not match M");
  auto problem = std::make_shared<ViProblem>(make_affine_tanh_problem(M, B, offset, kappa, j));

  struct Ray {
    Vector p0, q;
    std::vector<Scalar> t_grid;
    std::optional<Vector> expected;
  };
  auto rays = std::make_shared<std::vector<Ray>>();
  const json& rj = cfg.contains("rays") ? cfg["rays"] : json::array();
  for (std::size_t i = 0; i < rj.size(); ++i) {
    const std::string ctx = "rays[" + std::to_string(i) + "]";
    check_object(rj[i], {"p0", "q", "t_grid", "expected_derivative"}, ctx);
    Ray r;
    r.p0 = get_vector(require(rj[i], "p0", ctx), ctx + ".p0");
    r.q = get_vector(require(rj[i], "q", ctx), ctx + ".q");
    require_size(r.p0, B.cols(), ctx + ".p0");
    require_size(r.q, B.cols(), ctx + ".q");
    r.t_grid = ray_t_grid(rj[i], ctx);
    if (rj[i].contains("expected_derivative")) {
      r.expected = get_vector(rj[i]["expected_derivative"], ctx + ".expected_derivative");
      require_size(*r.expected, n, ctx + ".expected_derivative");
    }
    rays->push_back(std::move(r));
  }

  Application app;
  app.instance = {{"dim_x", n}, {"dim_p", B.cols()}, {"kappa", kappa}, {"nonsmooth_kind", inst["nonsmooth"]["kind"]}};
  app.csv_header = "ray,t,error,soq,lipschitz_ratio,quadform_gap";
  app.ray_count = rays->size();
  app.ray = [problem, rays, tol](std::size_t id, Command cmd, std::uint64_t seed) {
    const Ray& r = (*rays)[id];
    const ViProblem& prob = *problem;
    RayOutcome out;
    Verdicts v;
    out.result = {{"id", id}, {"p0", to_json(r.p0)}, {"q", to_json(r.q)}};

    ViSolverOptions so;
    so.tol = 1e-13;
    so.seed = seed;
    const ViSolution sol = solve_elliptic_vi(prob, r.p0, Vector::Zero(prob.dim_x), so);
    json mult = json::object();
    for (const auto& [k, val] : sol.multipliers) mult[k] = to_json(val);
    out.result["solution"] = {{"x", to_json(sol.x_bar)},
                              {"residual", sol.residual},
                              {"iterations", sol.iterations},
                              {"sigma", sol.sigma},
                              {"multipliers", mult}};
    v.add("solver_residual", sol.residual <= 1e-10);
    if (cmd == Command::Solve) {
      finish(out, v);
      return out;
    }

    const Matrix Ap = prob.jac_p(r.p0, sol.x_bar);
    const Matrix Ax = prob.jac_x(r.p0, sol.x_bar);
    const auto Q = catalog_subderivative(prob.nonsmooth, sol.x_bar, -prob.op(r.p0, sol.x_bar));
    const auto d = solve_derivative_vi(Ap, Ax, Q, r.q);
    const auto nec = check_necessary_conditions(d, Q, Ap, Ax, seed, 1000);
    out.result["derivative"] = {{"y", to_json(d.y)},
                                {"cone_kind", to_string(Q.cone.kind())},
                                {"q_value", d.q_value},
                                {"vi_residual", d.vi_residual},
                                {"value_identity_gap", d.value_identity_gap},
                                {"min_linearized_vi", nec.min_linearized_vi},
                                {"coercivity", d.coercivity},
                                {"epsilon", d.epsilon},
                                {"contraction", d.contraction},
                                {"iterations", d.iterations}};
    v.add("value_identity", d.value_identity_gap <= 1e-8);
    v.add("linearized_vi", nec.min_linearized_vi >= -1e-8);
    v.add("derivative_in_cone", nec.y_in_cone);
    if (r.expected) v.add("expected_derivative", (*r.expected - d.y).norm() <= 1e-8 * (1.0 + d.y.norm()));
    if (cmd == Command::Derivative) {
      finish(out, v);
      return out;
    }

    RayOptions ro;
    ro.seed = seed;
    FdReport rep = run_ray(prob, r.p0, r.q, r.t_grid, ro);
    const auto cv = verify_convergence(rep, d.y, Q, Ax, {tol.tol_conv, tol.tol_soq});
    out.result["fd"] = {{"t_grid", rep.t_grid},
                        {"errors", rep.errors},
                        {"soq_values", rep.soq_values},
                        {"lipschitz_ratios", rep.lipschitz_ratios},
                        {"quadform_gaps", rep.quadform_gaps},
                        {"consistency_margins", rep.consistency_margins},
                        {"final_error", cv.final_error},
                        {"extrapolated_error", cv.extrapolated_error},
                        {"soq_extrapolated", cv.soq_extrapolated},
                        {"q_value", cv.q_value},
                        {"fitted_rate", maybe(cv.fitted_rate)}};
    v.add("fd_errors_decreasing", cv.errors_decreasing);
    v.add("fd_final_error", cv.final_error_ok);
    v.add("fd_second_order_quotient", cv.soq_ok);
    v.add("fd_quadratic_form", cv.quadform_ok);
    v.add("fd_consistency", cv.consistency_ok);
    out.csv = prefix_rows(id, csv_body(fd_report_csv(rep)));
    if (r.expected) {
      FdReport copy = rep;
      v.add("expected_matches_fd", verify_convergence(copy, *r.expected, Q, Ax, {tol.tol_conv, tol.tol_soq}).pass());
    }
    if (cmd == Command::Verify) {
      const Scalar jac = jacobian_self_check(prob, r.p0, sol.x_bar);
      const Scalar mono = sampled_monotonicity(prob, r.p0, sol.x_bar, seed);
      out.result["operator"] = {{"jacobian_deviation", jac}, {"sampled_monotonicity", mono}};
      v.add("jacobian_consistent", jac <= 1e-5);
      v.add("strongly_monotone", mono > 0.0);
    }
    finish(out, v);
    return out;
  };
  return app;
}

// --------------------------------------------------------------- plasticity

Application plasticity(const json& cfg, const Tolerances& tol) {
  const json& inst = require(cfg, "instance", "config");
  if (!inst.is_object()) config_error("instance: expected an object");
  std::shared_ptr<PlasticityInstance> P;
  if (inst.contains("random")) {
    check_object(inst, {"random"}, "instance");
    const json& r = inst["random"];
    check_object(r, {"seed", "cells", "m", "n", "dim_v"}, "instance.random");
    P = std::make_shared<PlasticityInstance>(random_plasticity_instance(
        static_cast<std::uint64_t>(get_int(require(r, "seed", "instance.random"), "instance.random.seed")),
        get_int(require(r, "cells", "instance.random"), "instance.random.cells"),
        get_int(require(r, "m", "instance.random"), "instance.random.m"),
        get_int(require(r, "n", "instance.random"), "instance.random.n"),
        get_int(require(r, "dim_v", "instance.random"), "instance.random.dim_v")));
  } else {
    check_object(inst, {"cells", "m", "n", "weights", "D", "A", "B"}, "instance");
    PlasticityConfig pc;
    pc.cells = get_int(require(inst, "cells", "instance"), "instance.cells");
    pc.m = get_int(require(inst, "m", "instance"), "instance.m");
    pc.n = get_int(require(inst, "n", "instance"), "instance.n");
    if (inst.contains("weights")) pc.weights = get_vector(inst["weights"], "instance.weights");
    pc.D = get_matrix(require(inst, "D", "instance"), "instance.D");
    pc.A = get_matrix(require(inst, "A", "instance"), "instance.A");
    pc.B = get_matrix(require(inst, "B", "instance"), "instance.B");
    P = std::make_shared<PlasticityInstance>(build_instance(pc));
  }

  struct Ray {
    Vector ell, dell;
    std::vector<Scalar> t_grid;
  };
  auto rays = std::make_shared<std::vector<Ray>>();
  const json& rj = cfg.contains("rays") ? cfg["rays"] : json::array();
  for (std::size_t i = 0; i < rj.size(); ++i) {
    const std::string ctx = "rays[" + std::to_string(i) + "]";
    check_object(rj[i], {"p0", "load", "q", "t_grid"}, ctx);
    Ray r;
    if (rj[i].contains("p0") == rj[i].contains("load")) config_error(ctx + ": give exactly one of p0 and load");
    if (rj[i].contains("p0")) {
      r.ell = get_vector(rj[i]["p0"], ctx + ".p0");
    } else {
      const json& l = rj[i]["load"];
      check_object(l, {"seed", "overload"}, ctx + ".load");
      r.ell = random_plastic_load(*P, static_cast<std::uint64_t>(get_int(require(l, "seed", ctx), ctx + ".load.seed")),
                                  get_number(require(l, "overload", ctx), ctx + ".load.overload"));
    }
    r.dell = get_vector(require(rj[i], "q", ctx), ctx + ".q");
    require_size(r.ell, P->dim_v(), ctx + ".p0");
    require_size(r.dell, P->dim_v(), ctx + ".q");
    r.t_grid = rj[i].contains("t_grid") ? ray_t_grid(rj[i], ctx) : std::vector<Scalar>{1e-2, 1e-3, 1e-4, 1e-5};
    rays->push_back(std::move(r));
  }

  Application app;
  app.instance = {{"cells", P->cells}, {"m", P->m}, {"n", P->n}, {"dim_v", P->dim_v()}};
  app.csv_header = "ray,t,sigma_error,u_error,lipschitz_ratio";
  app.ray_count = rays->size();
  app.ray = [P, rays, tol](std::size_t id, Command cmd, std::uint64_t seed) {
    const Ray& r = (*rays)[id];
    RayOutcome out;
    Verdicts v;
    out.result = {{"id", id}, {"p0", to_json(r.ell)}, {"q", to_json(r.dell)}};
    const SaddleSolution s = solve_saddle(*P, r.ell);
    const Scalar ident = multiplier_identity_residual(*P, s);
    const auto plastic = (s.lambda.array() > 0.0).count();
    out.result["solution"] = {{"sigma", to_json(s.sigma)},      {"u", to_json(s.u)},
                              {"lambda", to_json(s.lambda)},    {"kkt_residual", s.kkt_residual},
                              {"multiplier_identity", ident},   {"plastic_cells", plastic},
                              {"iterations", s.iterations}};
    v.add("kkt_residual", s.kkt_residual <= 1e-9);
    v.add("multiplier_identity", ident <= 1e-9);
    if (cmd == Command::Solve) {
      finish(out, v);
      return out;
    }
    const auto d = plasticity_derivative(*P, s, r.dell);
    const Scalar feas = (P->B * d.dsigma - r.dell).lpNorm<Eigen::Infinity>();
    out.result["derivative"] = {{"dsigma", to_json(d.dsigma)}, {"du", to_json(d.du)}, {"qp_value", d.qp_value},
                                {"equilibrium_defect", feas}};
    v.add("derivative_equilibrium", feas <= 1e-9 * (1.0 + r.dell.norm()));
    if (cmd == Command::Derivative) {
      finish(out, v);
      return out;
    }
    const auto fd = plasticity_fd_check(*P, r.ell, r.dell, r.t_grid);
    out.result["fd"] = {{"t_grid", fd.t_grid},
                        {"sigma_errors", fd.sigma_errors},
                        {"u_errors", fd.u_errors},
                        {"lipschitz_ratios", fd.lipschitz_ratios},
                        {"fitted_rate", maybe(fit_rate(fd.t_grid, fd.sigma_errors, 1e-12))}};
    v.add("fd_sigma_final_error", fd.sigma_errors.back() <= tol.tol_conv);
    v.add("fd_u_final_error", fd.u_errors.back() <= tol.tol_conv);
    std::vector<std::string> rows;
    for (std::size_t i = 0; i < fd.t_grid.size(); ++i)
      rows.push_back(fmt(fd.t_grid[i]) + "," + fmt(fd.sigma_errors[i]) + "," + fmt(fd.u_errors[i]) + "," +
                     fmt(fd.lipschitz_ratios[i]));
    out.csv = prefix_rows(id, rows);
    if (cmd == Command::Verify) {
      const auto ratios = plasticity_lipschitz_samples(*P, r.ell, seed, 100, 0.2);
      const Scalar cv = batch_max_variation(ratios, 5);
      const Scalar lmax = *std::max_element(ratios.begin(), ratios.end());
      out.result["lipschitz"] = {{"max_ratio", lmax}, {"batch_variation", cv}, {"samples", ratios.size()}};
      v.add("lipschitz_finite", std::isfinite(lmax));
      v.add("lipschitz_stable", cv < 0.2);
    }
    finish(out, v);
    return out;
  };
  return app;
}

// ------------------------------------------------------------------ proxreg

ConvexPiece parse_piece(const json& j, const std::string& ctx) {
  if (!j.is_object() || j.size() != 1) config_error(ctx + ": expected {\"ball\": ...} or {\"box\": ...}");
  if (j.contains("ball")) {
    const json& b = j["ball"];
    check_object(b, {"center", "radius"}, ctx + ".ball");
    return ConvexPiece::ball(get_vector(require(b, "center", ctx), ctx + ".ball.center"),
                             get_number(require(b, "radius", ctx), ctx + ".ball.radius"));
  }
  if (j.contains("box")) {
    const json& b = j["box"];
    check_object(b, {"lower", "upper"}, ctx + ".box");
    return ConvexPiece::box(get_vector(require(b, "lower", ctx), ctx + ".box.lower"),
                            get_vector(require(b, "upper", ctx), ctx + ".box.upper"));
  }
  config_error(ctx + ": unknown piece kind");
}

ProxRegularSet parse_set(const json& j) {
  const std::string ctx = "instance.set";
  if (!j.is_object()) config_error(ctx + ": expected an object");
  const std::string kind = require(j, "kind", ctx).get<std::string>();
  if (kind == "ball_complement") {
    check_object(j, {"kind", "dim", "radius"}, ctx);
    return ProxRegularSet::ball_complement(get_int(require(j, "dim", ctx), ctx + ".dim"),
                                           get_number(require(j, "radius", ctx), ctx + ".radius"));
  }
  if (kind == "union_of_convex") {
    check_object(j, {"kind", "pieces", "r"}, ctx);
    std::vector<ConvexPiece> pieces;
    const json& pj = require(j, "pieces", ctx);
    if (!pj.is_array()) config_error(ctx + ".pieces: expected an array");
    for (std::size_t i = 0; i < pj.size(); ++i) pieces.push_back(parse_piece(pj[i], ctx + ".pieces[" + std::to_string(i) + "]"));
    return ProxRegularSet::union_of_convex(std::move(pieces), get_number(require(j, "r", ctx), ctx + ".r"));
  }
  if (kind == "convex") {
    check_object(j, {"kind", "piece"}, ctx);
    return ProxRegularSet::convex(parse_piece(require(j, "piece", ctx), ctx + ".piece"));
  }
  config_error(ctx + ": unknown set kind '" + kind + "'");
}

Application proxreg(const json& cfg, const Tolerances& tol) {
  const json& inst = require(cfg, "instance", "config");
  check_object(inst, {"set", "rho_list", "pairs", "triples", "segment"}, "instance");
  auto K = std::make_shared<ProxRegularSet>(parse_set(require(inst, "set", "instance")));
  const std::vector<Scalar> rho_list =
      inst.contains("rho_list") ? get_list(inst["rho_list"], "instance.rho_list") : std::vector<Scalar>{};
  for (Scalar rho : rho_list) {
    if (!(rho > 0.0 && rho < K->prox_constant())) config_error("instance.rho_list: need 0 < rho < r");
  }
  const int pairs = inst.contains("pairs") ? static_cast<int>(get_int(inst["pairs"], "instance.pairs")) : 10000;
  const int triples = inst.contains("triples") ? static_cast<int>(get_int(inst["triples"], "instance.triples")) : 10000;
  std::optional<std::pair<Vector, Vector>> segment;
  if (inst.contains("segment")) {
    check_object(inst["segment"], {"xbar", "v"}, "instance.segment");
    segment = std::make_pair(get_vector(require(inst["segment"], "xbar", "instance.segment"), "instance.segment.xbar"),
                             get_vector(require(inst["segment"], "v", "instance.segment"), "instance.segment.v"));
  }

  struct Ray {
    Vector p0, q;
    std::vector<Scalar> t_grid;
    std::optional<Vector> expected;
  };
  auto rays = std::make_shared<std::vector<Ray>>();
  const json& rj = cfg.contains("rays") ? cfg["rays"] : json::array();
  for (std::size_t i = 0; i < rj.size(); ++i) {
    const std::string ctx = "rays[" + std::to_string(i) + "]";
    check_object(rj[i], {"p0", "q", "t_grid", "expected_derivative"}, ctx);
    Ray r;
    r.p0 = get_vector(require(rj[i], "p0", ctx), ctx + ".p0");
    r.q = get_vector(require(rj[i], "q", ctx), ctx + ".q");
    require_size(r.p0, K->dim(), ctx + ".p0");
    require_size(r.q, K->dim(), ctx + ".q");
    r.t_grid = ray_t_grid(rj[i], ctx);
    if (rj[i].contains("expected_derivative")) {
      r.expected = get_vector(rj[i]["expected_derivative"], ctx + ".expected_derivative");
      require_size(*r.expected, K->dim(), ctx + ".expected_derivative");
    }
    rays->push_back(std::move(r));
  }

  Application app;
  app.instance = {{"kind", to_string(K->kind())}, {"dim", K->dim()}, {"prox_constant", K->prox_constant()}};
  app.csv_header = "ray,t,error,lipschitz_ratio";
  app.ray_count = rays->size();
  app.ray = [K, rays, tol](std::size_t id, Command cmd, std::uint64_t) {
    const Ray& r = (*rays)[id];
    RayOutcome out;
    Verdicts v;
    out.result = {{"id", id}, {"p0", to_json(r.p0)}, {"q", to_json(r.q)}};
    const Vector x = K->project(r.p0);
    out.result["solution"] = {{"x", to_json(x)}, {"distance", K->distance(r.p0)}};
    v.add("projection_in_set", K->contains(x));
    if (cmd == Command::Solve) {
      finish(out, v);
      return out;
    }
    const Vector y = projection_directional_derivative(*K, r.p0, r.q);
    out.result["derivative"] = {{"y", to_json(y)}};
    if (r.expected) v.add("expected_derivative", (*r.expected - y).norm() <= 1e-8 * (1.0 + y.norm()));
    if (cmd == Command::Derivative) {
      finish(out, v);
      return out;
    }
    std::vector<Scalar> t = r.t_grid;
    std::sort(t.begin(), t.end(), std::greater<>());
    std::vector<Scalar> errors, ratios;
    std::vector<Vector> quotients;
    std::vector<std::string> rows;
    for (Scalar ti : t) {
      quotients.push_back((K->project(r.p0 + ti * r.q) - x) / ti);
      errors.push_back((quotients.back() - y).norm());
      ratios.push_back(r.q.norm() > 0.0 ? quotients.back().norm() / r.q.norm() : 0.0);
      rows.push_back(fmt(ti) + "," + fmt(errors.back()) + "," + fmt(ratios.back()));
    }
    Vector limit = quotients.back();
    if (t.size() >= 2) {
      const Scalar t1 = t[t.size() - 2], t2 = t.back();
      limit = (t1 * quotients.back() - t2 * quotients[quotients.size() - 2]) / (t1 - t2);
    }
    const Scalar scale = 1.0 + y.norm();
    const Scalar extrapolated = (limit - y).norm();
    const auto rate = fit_rate(t, errors, 1e-9 * scale);
    out.result["fd"] = {{"t_grid", t},
                        {"errors", errors},
                        {"lipschitz_ratios", ratios},
                        {"final_error", errors.back()},
                        {"extrapolated_error", extrapolated},
                        {"fitted_rate", maybe(rate)}};
    v.add("fd_extrapolated_error", extrapolated <= tol.tol_conv * scale);
    v.add("fd_rate", !rate || *rate > 0.8);
    if (r.expected) v.add("expected_matches_fd", (limit - *r.expected).norm() <= tol.tol_conv * scale);
    out.csv = prefix_rows(id, rows);
    finish(out, v);
    return out;
  };
  app.suite = [K, rho_list, pairs, triples, segment](std::uint64_t seed) {
    RayOutcome out;
    Verdicts v;
    json lip = json::array();
    for (std::size_t i = 0; i < rho_list.size(); ++i) {
      const Scalar rho = rho_list[i];
      const Scalar measured = lipschitz_probe(*K, rho, pairs, seed + i);
      const Scalar bound = lipschitz_rank_bound(*K, rho);
      lip.push_back({{"rho", rho}, {"measured", measured}, {"bound", bound}});
      v.add("lipschitz_rank_rho_" + fmt(rho), measured <= bound + 1e-6);
    }
    out.result["lipschitz"] = lip;
    if (!rho_list.empty()) {
      const Scalar rho = *std::max_element(rho_list.begin(), rho_list.end());
      const Scalar margin = prox_regularity_margin(*K, rho, triples, seed + 101);
      const Scalar recast = recast_inequality_margin(*K, rho, triples, seed + 102);
      out.result["prox_regularity"] = {{"rho", rho}, {"margin", margin}, {"recast_margin", recast}, {"triples", triples}};
      v.add("prox_regularity_inequality", margin >= -1e-9);
      v.add("recast_inequality", recast >= -1e-9);
    }
    if (segment) {
      const auto sv = segment_differentiability_check(*K, segment->first, segment->second, rho_list, seed + 103);
      out.result["segment"] = {{"rho_list", sv.rho_list}, {"differentiable", sv.differentiable}, {"consistent", sv.consistent}};
      v.add("segment_consistent", sv.consistent);
    }
    finish(out, v);
    return out;
  };
  return app;
}

// ----------------------------------------------------------------- bang-bang

Vector parse_profile(const json& j, const Vector& x, const std::string& ctx) {
  check_object(j, {"sin", "cos"}, ctx);
  Vector v = Vector::Zero(x.size());
  for (const char* key : {"sin", "cos"}) {
    if (!j.contains(key)) continue;
    const Vector c = get_vector(j[key], ctx + "." + key);
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      const Scalar w = static_cast<Scalar>(k + 1) * std::numbers::pi;
      if (std::string(key) == "sin") v.array() += c(k) * (w * x.array()).sin();
      else v.array() += c(k) * (w * x.array()).cos();
    }
  }
  return v;
}

BangBangPerturbation parse_direction(const json& j, const Vector& x, const std::string& ctx) {
  check_object(j, {"p1", "p2"}, ctx);
  BangBangPerturbation p;
  if (j.contains("p1")) p.p1 = parse_profile(j["p1"], x, ctx + ".p1");
  if (j.contains("p2")) p.p2 = parse_profile(j["p2"], x, ctx + ".p2");
  return p;
}

BangBangPerturbation random_direction(const Vector& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> U(-1.0, 1.0);
  BangBangPerturbation p{Vector::Zero(x.size()), Vector::Zero(x.size())};
  for (int k = 1; k <= 3; ++k) {
    p.p1.array() += U(rng) * (k * std::numbers::pi * x.array()).sin();
    p.p2.array() += U(rng) * (k * std::numbers::pi * x.array()).cos();
  }
  return p;
}

Application bangbang(const json& cfg, const Tolerances&) {
  const json& inst = require(cfg, "instance", "config");
  check_object(inst, {"template", "grid_n", "family"}, "instance");
  BangBangFamily fam;
  if (inst.contains("template") == inst.contains("family")) config_error("instance: give exactly one of template and family");
  if (inst.contains("template")) {
    const std::string id = inst["template"].get<std::string>();
    const auto& ts = bangbang_templates();
    const auto it = std::find_if(ts.begin(), ts.end(), [&](const BangBangTemplate& t) { return t.id == id; });
    if (it == ts.end()) config_error("instance.template: unknown id '" + id + "'");
    fam = it->family;
  } else {
    const json& f = inst["family"];
    const std::string ctx = "instance.family";
    check_object(f, {"name", "f_kind", "f_coeff", "tracking_weight", "target_amplitude", "switches", "leading_sign"}, ctx);
    if (f.contains("name")) fam.name = f["name"].get<std::string>();
    if (f.contains("f_kind")) fam.f_kind = f["f_kind"].get<std::string>();
    if (f.contains("f_coeff")) fam.f_coeff = get_number(f["f_coeff"], ctx + ".f_coeff");
    if (f.contains("tracking_weight")) fam.tracking_weight = get_number(f["tracking_weight"], ctx + ".tracking_weight");
    if (f.contains("target_amplitude")) fam.target_amplitude = get_number(f["target_amplitude"], ctx + ".target_amplitude");
    if (f.contains("switches")) fam.switches = get_list(f["switches"], ctx + ".switches");
    if (f.contains("leading_sign")) fam.leading_sign = get_number(f["leading_sign"], ctx + ".leading_sign");
  }
  if (inst.contains("grid_n")) fam.grid_n = get_int(inst["grid_n"], "instance.grid_n");
  auto B = std::make_shared<BangBangInstance>(make_bangbang_instance(fam));
  const Vector x = B->nodes();
  const bool green_applicable = fam.f_coeff == 0.0 && fam.tracking_weight == 1.0;

  struct Ray {
    BangBangPerturbation dir;
    std::vector<Scalar> t_grid;
  };
  auto rays = std::make_shared<std::vector<Ray>>();
  const json& rj = cfg.contains("rays") ? cfg["rays"] : json::array();
  for (std::size_t i = 0; i < rj.size(); ++i) {
    const std::string ctx = "rays[" + std::to_string(i) + "]";
    check_object(rj[i], {"q", "t_grid"}, ctx);
    Ray r;
    r.dir = parse_direction(require(rj[i], "q", ctx), x, ctx + ".q");
    r.t_grid = rj[i].contains("t_grid") ? ray_t_grid(rj[i], ctx) : std::vector<Scalar>{1e-2, 1e-3, 1e-4};
    rays->push_back(std::move(r));
  }

  Application app;
  app.instance = {{"name", fam.name}, {"grid_n", fam.grid_n}, {"f_kind", fam.f_kind}, {"f_coeff", fam.f_coeff},
                  {"tracking_weight", fam.tracking_weight}, {"target_amplitude", fam.target_amplitude}};
  app.csv_header = "ray,t,max_gap,l1_ratio,velocity_error";
  app.ray_count = rays->size();
  auto base = std::make_shared<std::optional<AdjointData>>();
  auto stationary = [B, base]() -> const AdjointData& {
    if (!*base) *base = find_bangbang_stationary(*B);
    return **base;
  };
  app.ray = [B, rays, x, stationary](std::size_t id, Command cmd, std::uint64_t seed) {
    const Ray& r = (*rays)[id];
    RayOutcome out;
    Verdicts v;
    out.result = {{"id", id}};
    const AdjointData& adj = stationary();
    json zeros = json::array();
    bool slopes_ok = true;
    for (const auto& z : adj.zeros) {
      zeros.push_back({{"z", z.z}, {"slope", z.slope}});
      slopes_ok = slopes_ok && std::abs(z.slope) >= kSlopeMin;
    }
    out.result["solution"] = {{"switches", adj.u.switches}, {"zeros", zeros},
                              {"residual", adj.residual},   {"objective", adj.objective},
                              {"iterations", adj.iterations}, {"sign_consistent", adj.sign_consistent},
                              {"measure_constant", adj.measure_constant}};
    v.add("stationarity_residual", adj.residual <= 1e-10);
    v.add("sign_consistent", adj.sign_consistent);
    v.add("slopes_nondegenerate", slopes_ok);
    if (cmd == Command::Solve) {
      finish(out, v);
      return out;
    }
    const auto Q = curvature_form(adj);
    auto weights = [&](const BangBangPerturbation& d) {
      const auto s = second_order_data(*B, adj, d);
      return solve_sensitivity(adj, s.F2, s.Jup_p);
    };
    const auto sod = second_order_data(*B, adj, r.dir);
    const AtomicMeasure mu = solve_sensitivity(adj, sod.F2, sod.Jup_p);
    const BangBangPerturbation other = random_direction(x, seed);
    const Vector gsum = weights(r.dir + other).g;
    const Scalar lin = (gsum - mu.g - weights(other).g).norm();
    out.result["derivative"] = {{"atoms", mu.z},      {"weights", to_json(mu.g)}, {"q_value", Q.form(mu.g)},
                                {"F2", to_json(sod.F2)}, {"Jup_p", to_json(sod.Jup_p)}, {"linearity_defect", lin}};
    v.add("linearity", lin <= 1e-12 * (1.0 + gsum.norm()));
    if (cmd == Command::Derivative) {
      finish(out, v);
      return out;
    }
    const auto rep = weakstar_fd_check(*B, r.dir, r.t_grid, weakstar_test_family(seed));
    const Scalar l1_max = *std::max_element(rep.l1_ratios.begin(), rep.l1_ratios.end());
    out.result["fd"] = {{"t_grid", rep.t_grid},
                        {"max_gap", rep.max_gap},
                        {"l1_ratios", rep.l1_ratios},
                        {"velocity_errors", rep.velocity_errors},
                        {"max_weight", rep.max_weight},
                        {"fitted_rate", maybe(fit_rate(rep.t_grid, rep.max_gap, 1e-14))}};
    const Scalar scale = std::max(rep.max_weight, 1e-14);
    v.add("weakstar_gap", rep.max_gap.back() <= 1e-2 * scale);
    v.add("jump_velocity", rep.velocity_errors.back() <= 1e-2 * scale);
    v.add("l1_ratio_bounded", std::isfinite(l1_max) && l1_max <= 2.0 * rep.l1_ratios.back() + 1e-12);
    out.csv = prefix_rows(id, csv_body(weakstar_report_csv(rep)));
    finish(out, v);
    return out;
  };
  app.suite = [B, fam, green_applicable, stationary](std::uint64_t seed) {
    RayOutcome out;
    Verdicts v;
    const AdjointData& adj = stationary();
    const auto g = quadratic_growth_probe(*B, adj, 1000, seed);
    out.result["growth"] = {{"min_eigenvalue", g.min_eigenvalue}, {"fitted_c", g.fitted_c}, {"samples", g.samples}};
    v.add("growth_matches_second_order", (g.min_eigenvalue > 0.0) == (g.fitted_c > 0.0));
    const Scalar grad = adjoint_gradient_check(*B, 100, seed + 1);
    out.result["adjoint_gradient_relative_error"] = grad;
    v.add("adjoint_gradient", grad <= 1e-6);
    const Vector x = B->nodes();
    const Vector dir = (2.0 * x.array()).sin();
    const auto td = taylor_defects(*B, adj.u, dir, {1e-1, 1e-2, 1e-3});
    out.result["taylor_defects"] = td;
    v.add("taylor_remainder", td.back() <= std::max(0.1 * td.front(), 1e-6));
    v.add("measure_condition", std::isfinite(adj.measure_constant));
    if (green_applicable) {
      json conv = json::array();
      Scalar prev = kInf;
      bool decreasing = true;
      Scalar err = kInf;
      for (Eigen::Index n : {fam.grid_n / 4, fam.grid_n / 2, fam.grid_n}) {
        BangBangFamily f = fam;
        f.grid_n = n;
        const auto inst = make_bangbang_instance(f);
        const auto st = solve_state_adjoint(inst, adj.u);
        const Scalar val = second_derivative_at_points(inst, st, {0.5})(0, 0);
        err = std::abs(val - green_product_integral(0.5, 0.5)) / green_product_integral(0.5, 0.5);
        conv.push_back({{"grid_n", n}, {"value", val}, {"relative_error", err}});
        decreasing = decreasing && err <= prev;
        prev = err;
      }
      out.result["green_oracle"] = conv;
      v.add("green_oracle", decreasing && err <= 1e-2);
    }
    finish(out, v);
    return out;
  };
  return app;
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::Solve: return "solve";
    case Command::Derivative: return "derivative";
    case Command::Fd: return "fd";
    case Command::Verify: return "verify";
  }
  return "unknown";
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    config_error(std::string("malformed JSON: ") + e.what());
  }
}

RunResult run_experiment(const json& config, const RunOptions& opts) {
  check_object(config, {"schema_version", "description", "application", "seed", "instance", "rays", "tolerances", "output"},
               "config");
  if (config.contains("schema_version") && get_int(config["schema_version"], "schema_version") != kSchemaVersion)
    config_error("schema_version: unsupported version");
  if (config.contains("rays") && !config["rays"].is_array()) config_error("rays: expected an array");
  if (config.contains("output")) check_object(config["output"], {"report", "csv", "metadata"}, "output");
  std::uint64_t seed = 0;
  if (opts.seed_override) {
    seed = *opts.seed_override;
  } else {
    if (!config.contains("seed")) config_error("seed: required (or pass --seed)");
    if (!config["seed"].is_number_unsigned()) config_error("seed: expected a nonnegative integer");
    seed = config["seed"].get<std::uint64_t>();
  }
  Tolerances tol;
  if (config.contains("tolerances")) {
    const json& t = config["tolerances"];
    check_object(t, {"tol_conv", "tol_soq"}, "tolerances");
    if (t.contains("tol_conv")) tol.tol_conv = get_number(t["tol_conv"], "tolerances.tol_conv");
    if (t.contains("tol_soq")) tol.tol_soq = get_number(t["tol_soq"], "tolerances.tol_soq");
  }

  const std::string application = require(config, "application", "config").get<std::string>();
  Application app;
  if (application == "generic_vi") app = generic_vi(config, tol);
  else if (application == "plasticity") app = plasticity(config, tol);
  else if (application == "proxreg") app = proxreg(config, tol);
  else if (application == "bangbang") app = bangbang(config, tol);
  else config_error("application: unknown value '" + application + "'");

  const std::size_t n = app.ray_count;
  std::vector<RayOutcome> outcomes(n);
  std::vector<std::exception_ptr> errors(n);
  if (n > 0) {
    // The first ray runs alone so lazily shared state is built before workers start.
    auto run = [&](std::size_t i) {
      try {
        outcomes[i] = app.ray(i, opts.command, seed + i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    run(0);
    std::atomic<std::size_t> next{1};
    auto worker = [&] {
      for (std::size_t i = next++; i < n; i = next++) run(i);
    };
    const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(n)));
    std::vector<std::thread> pool;
    for (int k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunResult res;
  res.pass = true;
  res.report = {{"schema_version", kSchemaVersion},
                {"command", to_string(opts.command)},
                {"application", application},
                {"seed", seed},
                {"instance", app.instance}};
  json rays = json::array();
  std::string csv = app.csv_header + "\n";
  for (auto& o : outcomes) {
    res.pass = res.pass && o.pass;
    rays.push_back(std::move(o.result));
    csv += o.csv;
  }
  res.report["rays"] = std::move(rays);
  if (opts.command == Command::Verify && app.suite) {
    RayOutcome s = app.suite(seed);
    res.report["suite"] = std::move(s.result);
    res.pass = res.pass && s.pass;
  }
  res.report["pass"] = res.pass;
  res.csv = opts.command == Command::Fd || opts.command == Command::Verify ? csv : std::string();
  return res;
}

json catalog(const std::string& filter) {
  json entries = json::array();
  auto add = [&](const std::string& id, const std::string& category, const std::string& description) {
    if (id.find(filter) != std::string::npos)
      entries.push_back({{"id", id}, {"category", category}, {"description", description}});
  };
  add("nonsmooth.ball_complement", "nonsmooth", "indicator of {|x| >= R}; nonconvex, R-prox-regular");
  add("nonsmooth.box", "nonsmooth", "indicator of {lower <= x <= upper}; polyhedric");
  add("nonsmooth.one_norm", "nonsmooth", "sum_i w_i |x_i|; polyhedral");
  add("nonsmooth.pointwise_ball", "nonsmooth", "indicator of {|D x_i| <= 1} per block");
  add("nonsmooth.polyhedron", "nonsmooth", "indicator of {G x <= h}; polyhedric");
  add("set.ball_complement", "set", "{x in R^d : |x| >= R} with r = R");
  add("set.convex", "set", "single ball or box, r = infinity");
  add("set.union_of_convex", "set", "union of balls and boxes with a declared r");
  for (const auto& t : bangbang_templates()) add("bangbang." + t.id, "bangbang_template", t.description);
  std::sort(entries.begin(), entries.end(), [](const json& a, const json& b) { return a["id"] < b["id"]; });
  return {{"schema_version", kSchemaVersion}, {"filter", filter}, {"entries", entries}};
}

json error_json(const std::string& code, const std::string& message) {
  return {{"schema_version", kSchemaVersion}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace vis::cli
