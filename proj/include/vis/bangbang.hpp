#pragma once

#include "vis/subderivative.hpp"
#include "vis/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vis {

struct PointDerivs {
  Scalar value = 0.0;
  Scalar dy = 0.0;
  Scalar dyy = 0.0;
};

using PointwiseFn = std::function<PointDerivs(Scalar x, Scalar y)>;

/// Control problem on (0,1): minimize sum_i h L(x_i, y_i) subject to
/// -y'' + f(x, y) = u, y(0) = y(1) = 0, |u| <= 1, discretized by P1 elements
/// on a uniform grid with grid_n intervals. Vectors live on the interior nodes.
struct BangBangInstance {
  std::string name;
  Eigen::Index grid_n = 2000;
  PointwiseFn f;
  PointwiseFn L;
  std::vector<Scalar> initial_switches;
  Scalar leading_sign = 1.0;  ///< value of the control on (0, s_1)

  Scalar h() const { return 1.0 / static_cast<Scalar>(grid_n); }
  Eigen::Index interior() const { return grid_n - 1; }
  Vector nodes() const;
};

/// Parametrized family behind configs and templates:
/// f(y) = f_coeff * y (linear) or f_coeff * y^3 (cubic),
/// L(x, y) = tracking_weight / 2 * (y - target_amplitude * sin(2 pi x))^2.
struct BangBangFamily {
  std::string name = "custom";
  std::string f_kind = "linear";
  Scalar f_coeff = 0.0;
  Scalar tracking_weight = 1.0;
  Scalar target_amplitude = 1.0;
  Eigen::Index grid_n = 2000;
  std::vector<Scalar> switches{0.5};
  Scalar leading_sign = 1.0;
};

/// Throws InvalidInstance for a non-monotone f, a bad grid or bad switches.
BangBangInstance make_bangbang_instance(const BangBangFamily& family);

struct BangBangTemplate {
  std::string id;
  std::string description;
  BangBangFamily family;
};

/// linear_tracking, cubic_tracking, indefinite_tracking.
const std::vector<BangBangTemplate>& bangbang_templates();
/// grid_n = 0 keeps the template grid. Throws InvalidArgument for unknown ids.
BangBangInstance bangbang_template(const std::string& id, Eigen::Index grid_n = 0);

/// Piecewise +-1 control with sorted switches plus an optional nodal part
/// (interior nodes, lumped load).
struct BangBangControl {
  Scalar leading_sign = 1.0;
  std::vector<Scalar> switches;
  Vector nodal;

  Scalar sign_at(Scalar x) const;
  /// u(s_i-) - u(s_i+).
  Scalar jump(std::size_t i) const;
};

/// Perturbation (p1, p2) of J(p, u) = F(u + p1) + <p2, G(u + p1)> as interior
/// nodal vectors; empty means zero.
struct BangBangPerturbation {
  Vector p1;
  Vector p2;

  BangBangPerturbation scaled(Scalar t) const;
  BangBangPerturbation operator+(const BangBangPerturbation& other) const;
};

struct StateAdjoint {
  Vector y;
  Vector phi;
  Scalar objective = 0.0;
  Scalar residual = 0.0;
  int newton_iterations = 0;
};

/// State by Newton on the tridiagonal system (residual <= 1e-12), adjoint by
/// one linear solve. Throws NewtonDiverged.
StateAdjoint solve_state_adjoint(const BangBangInstance& inst, const BangBangControl& u,
                                 const BangBangPerturbation& p = {});

/// Exact P1 load of the control.
Vector control_load(const BangBangInstance& inst, const BangBangControl& u);

/// Piecewise linear interpolant of interior nodal values (zero at 0 and 1).
Scalar interpolate(const BangBangInstance& inst, const Vector& v, Scalar x);
/// Slope of the interpolant on the element containing x; the mean of both
/// sides at a node.
Scalar interpolant_slope(const BangBangInstance& inst, const Vector& v, Scalar x);
/// Nodal values of the hat functions at x (the discrete point load).
Vector point_load(const BangBangInstance& inst, Scalar x);

/// Interior sign changes of the interpolant, located by bisection.
std::vector<Scalar> locate_zeros(const BangBangInstance& inst, const Vector& v);

/// max over s of |{x : |v(x)| <= s}| / s for s = max|v| 10^{-k/2}, k = 1..8.
Scalar measure_condition_constant(const BangBangInstance& inst, const Vector& v);

struct AdjointZero {
  Scalar z = 0.0;
  Scalar slope = 0.0;
};

struct AdjointData {
  BangBangControl u;
  Vector y;
  Vector phi;
  std::vector<AdjointZero> zeros;
  Scalar residual = 0.0;  ///< max |phi(s_i)|
  Scalar objective = 0.0;
  int iterations = 0;
  bool sign_consistent = false;  ///< u = -sign(phi) off the switches, no other zeros
  Scalar measure_constant = 0.0;
};

inline constexpr Scalar kSlopeMin = 1e-3;
inline constexpr Scalar kAdjointZeroTol = 1e-8;

/// Newton on phi_p(s_i; s) = 0 from the instance guess or `warm`.
/// Throws SwitchCollision or NewtonDiverged.
AdjointData find_bangbang_stationary(const BangBangInstance& inst, const BangBangPerturbation& p = {},
                                     const std::vector<Scalar>* warm = nullptr);

/// Q(g) = 1/2 sum g_i^2 |phi'(z_i)| on the atoms at the zeros.
/// Throws DegenerateSlope.
QuadraticSubderivative curvature_form(const AdjointData& adj);

/// F''(u)[dz_i, dz_j] for point loads at the given locations.
Matrix second_derivative_at_points(const BangBangInstance& inst, const StateAdjoint& state,
                                   const std::vector<Scalar>& points);

struct SecondOrderData {
  Matrix F2;
  Vector Jup_p;
};

SecondOrderData second_order_data(const BangBangInstance& inst, const AdjointData& adj,
                                  const BangBangPerturbation& p);

struct AtomicMeasure {
  std::vector<Scalar> z;
  Vector g;

  Scalar pair(const std::function<Scalar(Scalar)>& test) const;
};

/// (F2 + diag(|phi'|/2)) g = -Jup_p. Throws NotCoercive.
AtomicMeasure solve_sensitivity(const AdjointData& adj, const Matrix& F2, const Vector& Jup_p);

/// int_0^1 G(x,a) G(x,b) dx for the Green's function of -d^2/dx^2.
Scalar green_product_integral(Scalar a, Scalar b);

struct TestFunction {
  std::string name;
  std::function<Scalar(Scalar)> value;
};

/// sin(k pi x), k = 1..8, and two Gaussian bumps drawn from the seed.
std::vector<TestFunction> weakstar_test_family(std::uint64_t seed);

struct WeakStarReport {
  std::vector<Scalar> t_grid;
  AtomicMeasure mu;
  std::vector<std::vector<Scalar>> gaps;  ///< per t, per test function
  std::vector<Scalar> max_gap;
  std::vector<Scalar> l1_ratios;
  std::vector<Scalar> velocity_errors;  ///< max_i |jump_i (s_i(t) - s_i) / t - g_i|
  Scalar max_weight = 0.0;
};

/// Stationary points along p = t dir (t descending, warm started) against the
/// predicted measure.
WeakStarReport weakstar_fd_check(const BangBangInstance& inst, const BangBangPerturbation& dir,
                                 const std::vector<Scalar>& t_grid, const std::vector<TestFunction>& tests);

/// CSV with columns t,max_gap,l1_ratio,velocity_error.
std::string weakstar_report_csv(const WeakStarReport& report);

struct GrowthProbe {
  Scalar min_eigenvalue = 0.0;  ///< of F2 + diag(|phi'|/2)
  Scalar fitted_c = 0.0;        ///< min of 2 (F(u) - F(u_bar)) / |u - u_bar|_1^2
  int samples = 0;
};

/// Random switch displacements of size <= displacement.
GrowthProbe quadratic_growth_probe(const BangBangInstance& inst, const AdjointData& adj, int samples,
                                   std::uint64_t seed, Scalar displacement = 1e-2);

/// |F(u + t v) - F(u) - t F'(u)v - t^2/2 F''(u)[v,v]| / t^2 per t.
std::vector<Scalar> taylor_defects(const BangBangInstance& inst, const BangBangControl& u, const Vector& v,
                                   const std::vector<Scalar>& t_grid);

/// Largest relative gap between sum_i h phi_i v_i and a central difference
/// of F over seeded smooth (u, v).
Scalar adjoint_gradient_check(const BangBangInstance& inst, int samples, std::uint64_t seed);

}  // namespace vis
