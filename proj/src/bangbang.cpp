#include "vis/bangbang.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace vis {

namespace {

constexpr int kMaxNewton = 50;
constexpr Scalar kStateTol = 1e-12;
constexpr Scalar kSwitchTol = 1e-10;

/// LDL' factorization of diag(d) + off (sub- and superdiagonal).
class Tridiagonal {
 public:
  Tridiagonal(Vector diag, Scalar off) : off_(off), d_(std::move(diag)), l_(d_.size()) {
    for (Eigen::Index i = 1; i < d_.size(); ++i) {
      l_(i) = off_ / d_(i - 1);
      d_(i) -= l_(i) * off_;
    }
  }

  Vector solve(const Vector& rhs) const {
    const Eigen::Index n = rhs.size();
    Vector x = rhs;
    for (Eigen::Index i = 1; i < n; ++i) x(i) -= l_(i) * x(i - 1);
    x.array() /= d_.array();
    for (Eigen::Index i = n - 2; i >= 0; --i) x(i) -= l_(i + 1) * x(i + 1);
    return x;
  }

 private:
  Scalar off_;
  Vector d_;
  Vector l_;
};

Tridiagonal state_jacobian(const BangBangInstance& inst, const Vector& y) {
  const Scalar h = inst.h();
  const Vector x = inst.nodes();
  Vector d(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) d(i) = 2.0 / h + h * inst.f(x(i), y(i)).dy;
  return Tridiagonal(std::move(d), -1.0 / h);
}

/// L_yy - f_yy phi at the nodes.
Vector curvature_weights(const BangBangInstance& inst, const Vector& y, const Vector& phi) {
  const Vector x = inst.nodes();
  Vector c(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) c(i) = inst.L(x(i), y(i)).dyy - inst.f(x(i), y(i)).dyy * phi(i);
  return c;
}

Vector or_zero(const Vector& v, Eigen::Index n) { return v.size() == 0 ? Vector::Zero(n) : v; }

Scalar stiffness_residual(const BangBangInstance& inst, const Vector& y, const Vector& load, Vector& r) {
  const Scalar h = inst.h();
  const Vector x = inst.nodes();
  const Eigen::Index n = y.size();
  r.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar left = i > 0 ? y(i - 1) : 0.0;
    const Scalar right = i + 1 < n ? y(i + 1) : 0.0;
    r(i) = (2.0 * y(i) - left - right) / h + h * inst.f(x(i), y(i)).value - load(i);
  }
  return r.lpNorm<Eigen::Infinity>();
}

/// Element index and local coordinate of x.
std::pair<Eigen::Index, Scalar> locate(const BangBangInstance& inst, Scalar x) {
  const Scalar s = x / inst.h();
  auto k = static_cast<Eigen::Index>(std::floor(s));
  k = std::clamp<Eigen::Index>(k, 0, inst.grid_n - 1);
  return {k, s - static_cast<Scalar>(k)};
}

Scalar extended(const Vector& v, Eigen::Index node) {
  return node <= 0 || node > v.size() ? 0.0 : v(node - 1);
}

Scalar gauss5(const std::function<Scalar(Scalar)>& fn, Scalar a, Scalar b) {
  static const Scalar xs[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  static const Scalar ws[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                               0.2369268850561891};
  const Scalar mid = 0.5 * (a + b);
  const Scalar half = 0.5 * (b - a);
  Scalar s = 0.0;
  for (int i = 0; i < 5; ++i) s += ws[i] * fn(mid + half * xs[i]);
  return half * s;
}

Vector smooth_random(std::mt19937_64& rng, const Vector& x, Scalar amplitude) {
  std::uniform_real_distribution<Scalar> u(-amplitude, amplitude);
  Vector v = Vector::Zero(x.size());
  for (int k = 1; k <= 4; ++k) {
    const Scalar a = u(rng);
    v.array() += a * (k * std::numbers::pi * x.array()).sin();
  }
  return v;
}

}  // namespace

Vector BangBangInstance::nodes() const {
  return Vector::LinSpaced(interior(), h(), 1.0 - h());
}

BangBangInstance make_bangbang_instance(const BangBangFamily& fam) {
  if (fam.grid_n < 4) throw Error(ErrorCode::InvalidInstance, "grid_n must be at least 4");
  if (fam.f_kind != "linear" && fam.f_kind != "cubic")
    throw Error(ErrorCode::InvalidInstance, "unknown f kind '" + fam.f_kind + "'");
  if (fam.f_coeff < 0.0) throw Error(ErrorCode::InvalidInstance, "f must be monotone in y (f_coeff >= 0)");
  if (std::abs(fam.leading_sign) != 1.0) throw Error(ErrorCode::InvalidInstance, "leading_sign must be +1 or -1");
  const Scalar h = 1.0 / static_cast<Scalar>(fam.grid_n);
  for (std::size_t i = 0; i < fam.switches.size(); ++i) {
    const Scalar s = fam.switches[i];
    if (!(s > h && s < 1.0 - h)) throw Error(ErrorCode::InvalidInstance, "switch guesses must lie inside (0,1)");
    if (i > 0 && !(s - fam.switches[i - 1] > h)) throw Error(ErrorCode::InvalidInstance, "switch guesses must be increasing");
  }

  BangBangInstance inst;
  inst.name = fam.name;
  inst.grid_n = fam.grid_n;
  inst.initial_switches = fam.switches;
  inst.leading_sign = fam.leading_sign;
  const Scalar c = fam.f_coeff;
  if (fam.f_kind == "linear") {
    inst.f = [c](Scalar, Scalar y) { return PointDerivs{c * y, c, 0.0}; };
  } else {
    inst.f = [c](Scalar, Scalar y) { return PointDerivs{c * y * y * y, 3.0 * c * y * y, 6.0 * c * y}; };
  }
  const Scalar w = fam.tracking_weight;
  const Scalar a = fam.target_amplitude;
  inst.L = [w, a](Scalar x, Scalar y) {
    const Scalar e = y - a * std::sin(2.0 * std::numbers::pi * x);
    return PointDerivs{0.5 * w * e * e, w * e, w};
  };
  for (Scalar x = 0.0; x <= 1.0; x += 0.125) {
    for (Scalar y = -1.0; y <= 1.0; y += 0.25) {
      if (inst.f(x, y).dy < 0.0) throw Error(ErrorCode::InvalidInstance, "f must be monotone in y");
    }
  }
  return inst;
}

const std::vector<BangBangTemplate>& bangbang_templates() {
  static const std::vector<BangBangTemplate> templates = [] {
    std::vector<BangBangTemplate> t;
    BangBangFamily lin;
    lin.name = "linear_tracking";
    t.push_back({"linear_tracking", "f = 0, L = (y - sin(2 pi x))^2 / 2, one switch at 0.5", lin});
    BangBangFamily cub = lin;
    cub.name = "cubic_tracking";
    cub.f_kind = "cubic";
    cub.f_coeff = 1.0;
    t.push_back({"cubic_tracking", "f = y^3, L = (y - sin(2 pi x))^2 / 2, one switch at 0.5", cub});
    BangBangFamily ind = lin;
    ind.name = "indefinite_tracking";
    ind.tracking_weight = -1.0;
    ind.target_amplitude = -0.01;
    t.push_back({"indefinite_tracking", "f = 0, L = -(y + 0.01 sin(2 pi x))^2 / 2, stationary but not a minimizer", ind});
    return t;
  }();
  return templates;
}

BangBangInstance bangbang_template(const std::string& id, Eigen::Index grid_n) {
  for (const auto& t : bangbang_templates()) {
    if (t.id != id) continue;
    BangBangFamily fam = t.family;
    if (grid_n > 0) fam.grid_n = grid_n;
    return make_bangbang_instance(fam);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown bang-bang template '" + id + "'");
}

Scalar BangBangControl::sign_at(Scalar x) const {
  const auto before = std::lower_bound(switches.begin(), switches.end(), x) - switches.begin();
  return before % 2 == 0 ? leading_sign : -leading_sign;
}

Scalar BangBangControl::jump(std::size_t i) const {
  const Scalar left = i % 2 == 0 ? leading_sign : -leading_sign;
  return 2.0 * left;
}

BangBangPerturbation BangBangPerturbation::scaled(Scalar t) const { return {t * p1, t * p2}; }

BangBangPerturbation BangBangPerturbation::operator+(const BangBangPerturbation& o) const {
  auto add = [](const Vector& a, const Vector& b) -> Vector {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    return a + b;
  };
  return {add(p1, o.p1), add(p2, o.p2)};
}

Vector control_load(const BangBangInstance& inst, const BangBangControl& u) {
  const Scalar h = inst.h();
  const Eigen::Index n = inst.grid_n;
  Vector b = Vector::Zero(inst.interior());
  auto add = [&](Eigen::Index node, Scalar v) {
    if (node >= 1 && node <= n - 1) b(node - 1) += v;
  };
  std::size_t next = 0;
  Scalar sign = u.leading_sign;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Scalar xk = static_cast<Scalar>(k) * h;
    const Scalar xk1 = static_cast<Scalar>(k + 1) * h;
    Scalar a = 0.0;
    while (true) {
      const bool split = next < u.switches.size() && u.switches[next] < xk1;
      const Scalar b_end = split ? u.switches[next] - xk : h;
      if (b_end > a) {
        add(k, sign * ((h - a) * (h - a) - (h - b_end) * (h - b_end)) / (2.0 * h));
        add(k + 1, sign * (b_end * b_end - a * a) / (2.0 * h));
      }
      if (!split) break;
      a = std::max(a, b_end);
      sign = -sign;
      ++next;
    }
  }
  if (u.nodal.size() > 0) b += h * u.nodal;
  return b;
}

StateAdjoint solve_state_adjoint(const BangBangInstance& inst, const BangBangControl& u,
                                 const BangBangPerturbation& p) {
  const Eigen::Index n = inst.interior();
  const Scalar h = inst.h();
  Vector load = control_load(inst, u);
  if (p.p1.size() > 0) load += h * p.p1;

  StateAdjoint out;
  out.y = Vector::Zero(n);
  Vector r;
  Scalar res = stiffness_residual(inst, out.y, load, r);
  int it = 0;
  while (res > kStateTol) {
    if (it >= kMaxNewton) throw Error(ErrorCode::NewtonDiverged, "state equation: no convergence");
    out.y -= state_jacobian(inst, out.y).solve(r);
    res = stiffness_residual(inst, out.y, load, r);
    if (!std::isfinite(res)) throw Error(ErrorCode::NewtonDiverged, "state equation: non-finite iterate");
    ++it;
  }
  out.residual = res;
  out.newton_iterations = it;

  const Vector x = inst.nodes();
  const Vector p2 = or_zero(p.p2, n);
  Vector rhs(n);
  out.objective = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const PointDerivs l = inst.L(x(i), out.y(i));
    rhs(i) = h * (l.dy + p2(i));
    out.objective += h * (l.value + p2(i) * out.y(i));
  }
  out.phi = state_jacobian(inst, out.y).solve(rhs);
  return out;
}

Vector point_load(const BangBangInstance& inst, Scalar x) {
  const auto [k, tau] = locate(inst, x);
  Vector v = Vector::Zero(inst.interior());
  if (k >= 1) v(k - 1) += 1.0 - tau;
  if (k + 1 <= inst.interior()) v(k) += tau;
  return v;
}

Scalar interpolate(const BangBangInstance& inst, const Vector& v, Scalar x) {
  const auto [k, tau] = locate(inst, x);
  return (1.0 - tau) * extended(v, k) + tau * extended(v, k + 1);
}

Scalar interpolant_slope(const BangBangInstance& inst, const Vector& v, Scalar x) {
  const auto [k, tau] = locate(inst, x);
  const Scalar h = inst.h();
  auto slope = [&](Eigen::Index e) { return (extended(v, e + 1) - extended(v, e)) / h; };
  if (tau < 1e-9 && k > 0) return 0.5 * (slope(k - 1) + slope(k));
  if (tau > 1.0 - 1e-9 && k + 1 < inst.grid_n) return 0.5 * (slope(k) + slope(k + 1));
  return slope(k);
}

std::vector<Scalar> locate_zeros(const BangBangInstance& inst, const Vector& v) {
  std::vector<Scalar> zeros;
  const Scalar h = inst.h();
  for (Eigen::Index node = 1; node < inst.grid_n - 1; ++node) {
    const Scalar a = extended(v, node);
    const Scalar b = extended(v, node + 1);
    if (a == 0.0) {
      if (extended(v, node - 1) * b < 0.0) zeros.push_back(static_cast<Scalar>(node) * h);
      continue;
    }
    if (a * b >= 0.0) continue;
    Scalar lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const Scalar mid = 0.5 * (lo + hi);
      ((a + (b - a) * mid) * a > 0.0 ? lo : hi) = mid;
    }
    zeros.push_back((static_cast<Scalar>(node) + 0.5 * (lo + hi)) * h);
  }
  return zeros;
}

Scalar measure_condition_constant(const BangBangInstance& inst, const Vector& v) {
  const Scalar vmax = v.lpNorm<Eigen::Infinity>();
  if (vmax == 0.0) return kInf;
  const Scalar h = inst.h();
  Scalar worst = 0.0;
  for (int k = 1; k <= 8; ++k) {
    const Scalar s = vmax * std::pow(10.0, -0.5 * k);
    Scalar measure = 0.0;
    for (Eigen::Index e = 0; e < inst.grid_n; ++e) {
      const Scalar a = extended(v, e);
      const Scalar b = extended(v, e + 1);
      if (a == b) {
        if (std::abs(a) <= s) measure += h;
        continue;
      }
      Scalar lo = (-s - a) / (b - a);
      Scalar hi = (s - a) / (b - a);
      if (lo > hi) std::swap(lo, hi);
      measure += h * std::max<Scalar>(0.0, std::min<Scalar>(hi, 1.0) - std::max<Scalar>(lo, 0.0));
    }
    worst = std::max(worst, measure / s);
  }
  return worst;
}

AdjointData find_bangbang_stationary(const BangBangInstance& inst, const BangBangPerturbation& p,
                                     const std::vector<Scalar>* warm) {
  std::vector<Scalar> s = warm ? *warm : inst.initial_switches;
  const std::size_t m = s.size();
  const Scalar h = inst.h();
  BangBangControl u{inst.leading_sign, s, Vector()};

  auto ordered = [&](const std::vector<Scalar>& c) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!(c[i] > h && c[i] < 1.0 - h)) return false;
      if (i > 0 && !(c[i] - c[i - 1] > h)) return false;
    }
    return true;
  };
  if (!ordered(s)) throw Error(ErrorCode::SwitchCollision, "initial switches are not separated by a grid cell");

  StateAdjoint st;
  Vector r(m);
  int it = 0;
  for (;; ++it) {
    u.switches = s;
    st = solve_state_adjoint(inst, u, p);
    for (std::size_t i = 0; i < m; ++i) r(i) = interpolate(inst, st.phi, s[i]);
    const Scalar res = m == 0 ? 0.0 : r.lpNorm<Eigen::Infinity>();
    if (res <= 1e-3 * kSwitchTol) break;
    if (it >= kMaxNewton) {
      if (res <= kSwitchTol) break;
      throw Error(ErrorCode::NewtonDiverged, "switch equations: no convergence");
    }

    const Tridiagonal J = state_jacobian(inst, st.y);
    const Vector c = curvature_weights(inst, st.y, st.phi);
    Matrix jac = Matrix::Zero(m, m);
    for (std::size_t k = 0; k < m; ++k) {
      const Vector w = J.solve(u.jump(k) * point_load(inst, s[k]));
      const Vector dphi = J.solve(h * c.cwiseProduct(w));
      for (std::size_t i = 0; i < m; ++i) jac(i, k) = interpolate(inst, dphi, s[i]);
      jac(k, k) += interpolant_slope(inst, st.phi, s[k]);
    }
    const Vector step = jac.fullPivLu().solve(-r);
    if (!step.allFinite()) throw Error(ErrorCode::NewtonDiverged, "switch equations: singular Jacobian");

    Scalar alpha = 1.0;
    std::vector<Scalar> trial(m);
    for (;; alpha *= 0.5) {
      if (alpha < 1e-6) throw Error(ErrorCode::SwitchCollision, "switch points merge or leave the domain");
      for (std::size_t i = 0; i < m; ++i) trial[i] = s[i] + alpha * step(i);
      if (ordered(trial)) break;
    }
    if (step.lpNorm<Eigen::Infinity>() * alpha == 0.0 && r.lpNorm<Eigen::Infinity>() <= kSwitchTol) break;
    s = trial;
  }

  AdjointData out;
  out.u = u;
  out.y = st.y;
  out.phi = st.phi;
  out.objective = st.objective;
  out.iterations = it;
  out.residual = m == 0 ? 0.0 : r.lpNorm<Eigen::Infinity>();
  for (Scalar z : s) out.zeros.push_back({z, interpolant_slope(inst, st.phi, z)});

  const auto zeros = locate_zeros(inst, st.phi);
  bool ok = zeros.size() == m;
  for (std::size_t i = 0; ok && i < m; ++i) ok = std::abs(zeros[i] - s[i]) <= h;
  std::vector<Scalar> edges{0.0};
  edges.insert(edges.end(), s.begin(), s.end());
  edges.push_back(1.0);
  for (std::size_t i = 0; ok && i + 1 < edges.size(); ++i) {
    const Scalar mid = 0.5 * (edges[i] + edges[i + 1]);
    ok = u.sign_at(mid) * interpolate(inst, st.phi, mid) < 0.0;
  }
  out.sign_consistent = ok;
  out.measure_constant = measure_condition_constant(inst, st.phi);
  return out;
}

QuadraticSubderivative curvature_form(const AdjointData& adj) {
  const auto m = static_cast<Eigen::Index>(adj.zeros.size());
  Vector loc(m);
  Vector half_slope(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const AdjointZero& z = adj.zeros[static_cast<std::size_t>(i)];
    if (std::abs(z.slope) < kSlopeMin) throw Error(ErrorCode::DegenerateSlope, "adjoint slope below slope_min");
    loc(i) = z.z;
    half_slope(i) = 0.5 * std::abs(z.slope);
  }
  QuadraticSubderivative q{ConeSpec::atoms(loc), half_slope.asDiagonal().toDenseMatrix(), loc, Vector::Zero(m)};
  return q;
}

Matrix second_derivative_at_points(const BangBangInstance& inst, const StateAdjoint& state,
                                   const std::vector<Scalar>& points) {
  const auto m = static_cast<Eigen::Index>(points.size());
  const Tridiagonal J = state_jacobian(inst, state.y);
  const Vector hc = inst.h() * curvature_weights(inst, state.y, state.phi);
  Matrix W(inst.interior(), m);
  for (Eigen::Index k = 0; k < m; ++k) W.col(k) = J.solve(point_load(inst, points[static_cast<std::size_t>(k)]));
  Matrix F2(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index k = i; k < m; ++k) F2(i, k) = F2(k, i) = (hc.array() * W.col(i).array() * W.col(k).array()).sum();
  }
  return F2;
}

SecondOrderData second_order_data(const BangBangInstance& inst, const AdjointData& adj, const BangBangPerturbation& p) {
  StateAdjoint st;
  st.y = adj.y;
  st.phi = adj.phi;
  std::vector<Scalar> pts;
  for (const auto& z : adj.zeros) pts.push_back(z.z);

  SecondOrderData out;
  out.F2 = second_derivative_at_points(inst, st, pts);

  const Eigen::Index n = inst.interior();
  const Scalar h = inst.h();
  const Tridiagonal J = state_jacobian(inst, adj.y);
  const Vector hc = h * curvature_weights(inst, adj.y, adj.phi);
  const Vector dy = J.solve(h * or_zero(p.p1, n));
  const Vector dphi = J.solve(hc.cwiseProduct(dy) + h * or_zero(p.p2, n));
  out.Jup_p.resize(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) out.Jup_p(static_cast<Eigen::Index>(i)) = interpolate(inst, dphi, pts[i]);
  return out;
}

Scalar AtomicMeasure::pair(const std::function<Scalar(Scalar)>& test) const {
  Scalar s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += g(static_cast<Eigen::Index>(i)) * test(z[i]);
  return s;
}

AtomicMeasure solve_sensitivity(const AdjointData& adj, const Matrix& F2, const Vector& Jup_p) {
  const auto m = static_cast<Eigen::Index>(adj.zeros.size());
  if (F2.rows() != m || F2.cols() != m || Jup_p.size() != m)
    throw Error(ErrorCode::InvalidArgument, "solve_sensitivity: dimension mismatch");
  Matrix M = F2;
  for (Eigen::Index i = 0; i < m; ++i) M(i, i) += 0.5 * std::abs(adj.zeros[static_cast<std::size_t>(i)].slope);
  AtomicMeasure mu;
  for (const auto& z : adj.zeros) mu.z.push_back(z.z);
  if (m == 0) {
    mu.g = Vector();
    return mu;
  }
  const Scalar lmin = Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (!(lmin > 0.0)) {
    std::ostringstream os;
    os << "F'' + Q has smallest eigenvalue " << lmin;
    throw Error(ErrorCode::NotCoercive, os.str());
  }
  mu.g = M.llt().solve(-Jup_p);
  return mu;
}

Scalar green_product_integral(Scalar a, Scalar b) {
  auto G = [](Scalar x, Scalar s) { return x <= s ? x * (1.0 - s) : s * (1.0 - x); };
  const Scalar lo = std::min(a, b);
  const Scalar hi = std::max(a, b);
  auto prod = [&](Scalar x) { return G(x, a) * G(x, b); };
  return gauss5(prod, 0.0, lo) + gauss5(prod, lo, hi) + gauss5(prod, hi, 1.0);
}

std::vector<TestFunction> weakstar_test_family(std::uint64_t seed) {
  std::vector<TestFunction> fam;
  for (int k = 1; k <= 8; ++k) {
    fam.push_back({"sin" + std::to_string(k), [k](Scalar x) { return std::sin(k * std::numbers::pi * x); }});
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> center(0.2, 0.8);
  std::uniform_real_distribution<Scalar> width(0.05, 0.15);
  for (int b = 0; b < 2; ++b) {
    const Scalar c = center(rng);
    const Scalar w = width(rng);
    fam.push_back({"bump" + std::to_string(b + 1), [c, w](Scalar x) { return std::exp(-((x - c) / w) * ((x - c) / w)); }});
  }
  return fam;
}

WeakStarReport weakstar_fd_check(const BangBangInstance& inst, const BangBangPerturbation& dir,
                                 const std::vector<Scalar>& t_grid, const std::vector<TestFunction>& tests) {
  const AdjointData base = find_bangbang_stationary(inst);
  const SecondOrderData sod = second_order_data(inst, base, dir);

  WeakStarReport rep;
  rep.mu = solve_sensitivity(base, sod.F2, sod.Jup_p);
  rep.max_weight = rep.mu.g.size() ? rep.mu.g.lpNorm<Eigen::Infinity>() : 0.0;
  rep.t_grid = t_grid;
  std::sort(rep.t_grid.begin(), rep.t_grid.end(), std::greater<>());

  const std::vector<Scalar>& s0 = base.u.switches;
  std::vector<Scalar> warm = s0;
  for (Scalar t : rep.t_grid) {
    const AdjointData at = find_bangbang_stationary(inst, dir.scaled(t), &warm);
    warm = at.u.switches;
    Scalar l1 = 0.0;
    Scalar vel = 0.0;
    for (std::size_t i = 0; i < s0.size(); ++i) {
      const Scalar d = warm[i] - s0[i];
      l1 += std::abs(base.u.jump(i) * d);
      vel = std::max(vel, std::abs(base.u.jump(i) * d / t - rep.mu.g(static_cast<Eigen::Index>(i))));
    }
    std::vector<Scalar> gaps;
    for (const auto& tf : tests) {
      Scalar lhs = 0.0;
      for (std::size_t i = 0; i < s0.size(); ++i) lhs += base.u.jump(i) * gauss5(tf.value, s0[i], warm[i]);
      gaps.push_back(std::abs(lhs / t - rep.mu.pair(tf.value)));
    }
    rep.max_gap.push_back(gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end()));
    rep.gaps.push_back(std::move(gaps));
    rep.l1_ratios.push_back(l1 / t);
    rep.velocity_errors.push_back(vel);
  }
  return rep;
}

std::string weakstar_report_csv(const WeakStarReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "t,max_gap,l1_ratio,velocity_error\n";
  for (std::size_t i = 0; i < r.t_grid.size(); ++i)
    os << r.t_grid[i] << ',' << r.max_gap[i] << ',' << r.l1_ratios[i] << ',' << r.velocity_errors[i] << '\n';
  return os.str();
}

GrowthProbe quadratic_growth_probe(const BangBangInstance& inst, const AdjointData& adj, int samples,
                                   std::uint64_t seed, Scalar displacement) {
  GrowthProbe out;
  const SecondOrderData sod = second_order_data(inst, adj, {});
  Matrix M = sod.F2;
  for (std::size_t i = 0; i < adj.zeros.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    M(ii, ii) += 0.5 * std::abs(adj.zeros[i].slope);
  }
  out.min_eigenvalue = M.size() ? Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues().minCoeff() : kInf;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> U(-displacement, displacement);
  out.fitted_c = kInf;
  for (int k = 0; k < samples; ++k) {
    BangBangControl u = adj.u;
    Scalar l1 = 0.0;
    for (std::size_t i = 0; i < u.switches.size(); ++i) {
      const Scalar d = U(rng);
      u.switches[i] += d;
      l1 += std::abs(u.jump(i) * d);
    }
    if (l1 == 0.0) continue;
    const Scalar diff = solve_state_adjoint(inst, u).objective - adj.objective;
    out.fitted_c = std::min(out.fitted_c, 2.0 * diff / (l1 * l1));
    ++out.samples;
  }
  return out;
}

std::vector<Scalar> taylor_defects(const BangBangInstance& inst, const BangBangControl& u, const Vector& v,
                                   const std::vector<Scalar>& t_grid) {
  const Scalar h = inst.h();
  const StateAdjoint st = solve_state_adjoint(inst, u);
  const Scalar grad = h * st.phi.dot(v);
  const Vector w = state_jacobian(inst, st.y).solve(h * v);
  const Scalar hess = h * (curvature_weights(inst, st.y, st.phi).array() * w.array().square()).sum();
  std::vector<Scalar> out;
  for (Scalar t : t_grid) {
    BangBangControl ut = u;
    ut.nodal = or_zero(u.nodal, inst.interior()) + t * v;
    const Scalar Ft = solve_state_adjoint(inst, ut).objective;
    out.push_back(std::abs(Ft - st.objective - t * grad - 0.5 * t * t * hess) / (t * t));
  }
  return out;
}

Scalar adjoint_gradient_check(const BangBangInstance& inst, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vector x = inst.nodes();
  const Scalar h = inst.h();
  const Scalar eps = 1e-4;
  Scalar worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    BangBangControl u{0.0, {}, smooth_random(rng, x, 0.25)};
    const Vector v = smooth_random(rng, x, 1.0);
    const Scalar ad = h * solve_state_adjoint(inst, u).phi.dot(v);
    BangBangControl up = u, um = u;
    up.nodal += eps * v;
    um.nodal -= eps * v;
    const Scalar fd = (solve_state_adjoint(inst, up).objective - solve_state_adjoint(inst, um).objective) / (2.0 * eps);
    worst = std::max(worst, std::abs(fd - ad) / std::max(std::abs(ad), 1e-12));
  }
  return worst;
}

}  // namespace vis
