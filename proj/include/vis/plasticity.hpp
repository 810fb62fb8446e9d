#pragma once

#include "vis/subderivative.hpp"
#include "vis/types.hpp"
#include "vis/vi.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vis {

/// Discretized static elastoplasticity in dual form: N cells with weights
/// mu_i, stresses sigma_i in R^m, yield map D : R^m -> R^n, constraint
/// |D sigma_i| <= 1, compliance A (SPD on R^{mN}) and equilibrium B.
struct PlasticityInstance {
  Eigen::Index cells = 1;
  Vector weights;  ///< mu_i > 0
  Eigen::Index m = 1;
  Eigen::Index n = 1;
  Matrix D;  ///< n x m
  Matrix A;  ///< mN x mN
  Matrix B;  ///< dim_V x mN

  Eigen::Index dim_sigma() const { return m * cells; }
  Eigen::Index dim_v() const { return B.rows(); }
  /// Basis of H = {sigma : D sigma_i = 0 for all cells}.
  Matrix kernel_basis() const;
};

struct PlasticityConfig {
  Eigen::Index cells = 1;
  Eigen::Index m = 1;
  Eigen::Index n = 1;
  Vector weights;  ///< empty: uniform 1/cells
  Matrix D;
  Matrix A;
  Matrix B;
};

/// Validates coercivity of A and surjectivity of B restricted to H.
/// Throws InvalidInstance naming the violated invariant.
PlasticityInstance build_instance(const PlasticityConfig& config);

/// Random instance with N cells, stress dimension m and yield dimension n < m,
/// drawn from a seeded stream; always passes build_instance.
PlasticityInstance random_plasticity_instance(std::uint64_t seed, Eigen::Index cells, Eigen::Index m,
                                              Eigen::Index n, Eigen::Index dim_v);

struct SaddleSolution {
  Vector sigma;
  Vector u;
  Vector lambda;  ///< per cell, >= 0
  Vector xi;      ///< pointwise normal, xi_i = lambda_i D'D sigma_i
  Scalar kkt_residual = 0.0;
  int iterations = 0;
};

/// minimize 0.5 <A sigma, sigma> s.t. B sigma = ell, |D sigma_i| <= 1,
/// with multipliers u (equilibrium) and lambda (yield). Stationarity reads
///   A sigma + B'u + M xi = 0,   M = diag(mu_i I_m).
/// A previous solution, when given, seeds the active set and skips the
/// splitting phase. Throws Infeasible when B sigma = ell misses K.
SaddleSolution solve_saddle(const PlasticityInstance& inst, const Vector& ell,
                            const SaddleSolution* warm = nullptr);

/// Same solve wrapped as a ViSolution with multipliers {"sigma", "u", "lambda"}.
/// residual is the KKT residual (stationarity and feasibility, max-norm).
ViSolution solve_saddle_vi(const PlasticityInstance& inst, const Vector& ell);

/// Max-norm of the stationarity defect A sigma + B'u + M xi with xi = lambda D'D sigma.
Scalar multiplier_identity_residual(const PlasticityInstance& inst, const SaddleSolution& sol);

struct PlasticityDerivative {
  Vector dsigma;
  Vector du;
  Scalar qp_value = 0.0;
};

/// Directional derivative (sigma', u') of ell -> (sigma, u) in direction dell:
/// minimize 0.5<A s, s> + 0.5 sum mu_i lambda_i |D s_i|^2 over the critical
/// cone with B s = dell; u' from stationarity on H.
PlasticityDerivative plasticity_derivative(const PlasticityInstance& inst, const SaddleSolution& base,
                                           const Vector& dell);

struct PlasticityFdReport {
  std::vector<Scalar> t_grid;
  std::vector<Scalar> sigma_errors;
  std::vector<Scalar> u_errors;
  std::vector<Scalar> lipschitz_ratios;
};

/// Difference quotients of (sigma, u) along ell + t dell against the derivative.
PlasticityFdReport plasticity_fd_check(const PlasticityInstance& inst, const Vector& ell, const Vector& dell,
                                       const std::vector<Scalar>& t_grid);

/// Sampled ratios (|d sigma| + |d u|) / |d ell| over random pairs around ell.
std::vector<Scalar> plasticity_lipschitz_samples(const PlasticityInstance& inst, const Vector& ell,
                                                 std::uint64_t seed, int pairs, Scalar spread);

/// Coefficient of variation of the per-batch maxima of consecutive batches.
Scalar batch_max_variation(const std::vector<Scalar>& samples, int batches);

/// Load ell = B sigma* for a seeded sigma* with |D sigma*_i| spread around
/// `overload`, so that roughly the cells above 1 end up plastic.
Vector random_plastic_load(const PlasticityInstance& inst, std::uint64_t seed, Scalar overload);

}  // namespace vis
