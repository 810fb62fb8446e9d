#include "vis/plasticity.hpp"

#include "vis/qp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vis {

namespace {

constexpr int kAdmmMaxIters = 200000;
constexpr int kNewtonMaxIters = 60;
constexpr int kActiveSetRounds = 40;

Matrix block_kernel(const Matrix& D, Eigen::Index cells) {
  const Eigen::Index m = D.cols();
  const Matrix K = null_space(D, m);
  Matrix H = Matrix::Zero(m * cells, K.cols() * cells);
  for (Eigen::Index i = 0; i < cells; ++i) H.block(i * m, i * K.cols(), m, K.cols()) = K;
  return H;
}

Matrix random_gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<Scalar> nd;
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

struct Workspace {
  const PlasticityInstance& inst;
  Matrix DtD;
  Matrix HBt;  // H'B'
  bool unique_u = false;

  explicit Workspace(const PlasticityInstance& p) : inst(p) {
    DtD = p.D.transpose() * p.D;
    const Matrix H = p.kernel_basis();
    HBt = H.transpose() * p.B.transpose();
    if (p.dim_v() == 0) {
      unique_u = true;
    } else if (HBt.rows() >= p.dim_v()) {
      Eigen::ColPivHouseholderQR<Matrix> qr(HBt);
      qr.setThreshold(1e-10);
      unique_u = qr.rank() == p.dim_v();
    }
  }

  Eigen::Index m() const { return inst.m; }
  Scalar yield(const Vector& s, Eigen::Index i) const { return (inst.D * s.segment(i * m(), m())).norm(); }
};

// Stationarity A sigma + B'u + M xi and feasibility B sigma - ell, max-norm.
Scalar kkt_defect(const Workspace& ws, const Vector& ell, const SaddleSolution& s) {
  const auto& inst = ws.inst;
  Vector r = inst.A * s.sigma + inst.B.transpose() * s.u;
  for (Eigen::Index i = 0; i < inst.cells; ++i) r.segment(i * ws.m(), ws.m()) += inst.weights(i) * s.xi.segment(i * ws.m(), ws.m());
  Scalar out = r.cwiseAbs().maxCoeff();
  if (inst.dim_v() > 0) out = std::max(out, (inst.B * s.sigma - ell).cwiseAbs().maxCoeff());
  return out;
}

// Newton on the smooth system with the cells in `active` on the yield surface.
bool newton_on_active_set(const Workspace& ws, const Vector& ell, const std::vector<Eigen::Index>& active,
                          Vector& sigma, Vector& u, Vector& lam) {
  const auto& inst = ws.inst;
  const Eigen::Index ns = inst.dim_sigma();
  const Eigen::Index nv = inst.dim_v();
  const auto na = static_cast<Eigen::Index>(active.size());
  const Eigen::Index m = ws.m();
  const Eigen::Index dim = ns + nv + na;
  const Scalar scale = 1.0 + inst.A.norm() * (1.0 + sigma.norm()) + ell.norm();

  auto residual = [&](const Vector& s, const Vector& uu, const Vector& l) {
    Vector F(dim);
    F.head(ns) = inst.A * s + inst.B.transpose() * uu;
    for (Eigen::Index a = 0; a < na; ++a) {
      const Eigen::Index i = active[static_cast<std::size_t>(a)];
      F.segment(i * m, m) += inst.weights(i) * l(a) * ws.DtD * s.segment(i * m, m);
    }
    F.segment(ns, nv) = inst.B * s - ell;
    for (Eigen::Index a = 0; a < na; ++a) {
      const Eigen::Index i = active[static_cast<std::size_t>(a)];
      F(ns + nv + a) = 0.5 * inst.weights(i) * (ws.yield(s, i) * ws.yield(s, i) - 1.0);
    }
    return F;
  };

  Vector F = residual(sigma, u, lam);
  for (int it = 0; it < kNewtonMaxIters; ++it) {
    const Scalar fn = F.cwiseAbs().maxCoeff();
    if (fn <= 1e-15 * scale) return true;
    Matrix J = Matrix::Zero(dim, dim);
    J.topLeftCorner(ns, ns) = inst.A;
    J.block(0, ns, ns, nv) = inst.B.transpose();
    J.block(ns, 0, nv, ns) = inst.B;
    for (Eigen::Index a = 0; a < na; ++a) {
      const Eigen::Index i = active[static_cast<std::size_t>(a)];
      J.block(i * m, i * m, m, m) += inst.weights(i) * lam(a) * ws.DtD;
      const Vector c = inst.weights(i) * ws.DtD * sigma.segment(i * m, m);
      J.block(i * m, ns + nv + a, m, 1) = c;
      J.block(ns + nv + a, i * m, 1, m) = c.transpose();
    }
    Eigen::PartialPivLU<Matrix> lu(J);
    Vector step = lu.solve(-F);
    if (!step.allFinite() || (J * step + F).norm() > 1e-8 * (1.0 + F.norm())) {
      step = J.completeOrthogonalDecomposition().solve(-F);
    }
    // Damped step on the merit |F|.
    Scalar alpha = 1.0;
    Vector Fn;
    for (int k = 0; k < 30; ++k) {
      Fn = residual(sigma + alpha * step.head(ns), u + alpha * step.segment(ns, nv), lam + alpha * step.tail(na));
      if (Fn.norm() <= (1.0 - 1e-4 * alpha) * F.norm()) break;
      alpha *= 0.5;
    }
    if (!(Fn.norm() < F.norm())) return fn <= 1e-11 * scale;
    sigma += alpha * step.head(ns);
    u += alpha * step.segment(ns, nv);
    lam += alpha * step.tail(na);
    F = Fn;
  }
  return F.cwiseAbs().maxCoeff() <= 1e-11 * scale;
}

struct AdmmResult {
  Vector sigma;
  Vector lambda_guess;  // per cell
  bool converged = false;
  Scalar primal_gap = 0.0;
};

AdmmResult admm(const Workspace& ws, const Vector& ell) {
  const auto& inst = ws.inst;
  const Eigen::Index ns = inst.dim_sigma();
  const Eigen::Index nv = inst.dim_v();
  const Eigen::Index m = ws.m();
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Matrix>(inst.A, Eigen::EigenvaluesOnly).eigenvalues();
  const Scalar rho = std::sqrt(std::max(ev(0), 1e-12) * ev(ev.size() - 1));

  Matrix K = Matrix::Zero(ns + nv, ns + nv);
  K.topLeftCorner(ns, ns) = inst.A + rho * Matrix::Identity(ns, ns);
  K.topRightCorner(ns, nv) = inst.B.transpose();
  K.bottomLeftCorner(nv, ns) = inst.B;
  const auto cod = K.completeOrthogonalDecomposition();

  const NonsmoothFunctional proj = NonsmoothFunctional::pointwise_ball(inst.D, inst.cells);
  Vector S = Vector::Zero(ns), U = Vector::Zero(ns), sigma = Vector::Zero(ns);
  Vector rhs(ns + nv);
  rhs.tail(nv) = ell;
  AdmmResult out;
  for (int it = 0; it < kAdmmMaxIters; ++it) {
    rhs.head(ns) = rho * (S - U);
    sigma = cod.solve(rhs).head(ns);
    const Vector S_prev = S;
    S = proj.prox(sigma + U, 1.0);
    U += sigma - S;
    const Scalar r = (sigma - S).norm();
    const Scalar s = rho * (S - S_prev).norm();
    const Scalar scale = 1.0 + sigma.norm();
    if (r <= 1e-10 * scale && s <= 1e-10 * scale * rho) {
      out.converged = true;
      break;
    }
  }
  out.sigma = S;
  out.primal_gap = (sigma - S).norm();
  out.lambda_guess = Vector::Zero(inst.cells);
  for (Eigen::Index i = 0; i < inst.cells; ++i) {
    const Vector a = ws.DtD * S.segment(i * m, m);
    if (a.squaredNorm() > 0.0) {
      out.lambda_guess(i) = std::max<Scalar>(0.0, rho * U.segment(i * m, m).dot(a) / (inst.weights(i) * a.squaredNorm()));
    }
  }
  return out;
}

// Multipliers from sigma: u on H when unique, then lambda from stationarity.
void recover_multipliers(const Workspace& ws, SaddleSolution& s, const std::vector<Eigen::Index>& active) {
  const auto& inst = ws.inst;
  const Eigen::Index m = ws.m();
  if (ws.unique_u && inst.dim_v() > 0) {
    const Vector rhs = -(inst.kernel_basis().transpose() * inst.A * s.sigma);
    s.u = ws.HBt.colPivHouseholderQr().solve(rhs);
  }
  const Vector r = -(inst.A * s.sigma + inst.B.transpose() * s.u);
  s.lambda = Vector::Zero(inst.cells);
  for (Eigen::Index i : active) {
    const Vector a = ws.DtD * s.sigma.segment(i * m, m);
    s.lambda(i) = std::max<Scalar>(0.0, r.segment(i * m, m).dot(a) / (inst.weights(i) * a.squaredNorm()));
  }
  s.xi = Vector::Zero(inst.dim_sigma());
  for (Eigen::Index i = 0; i < inst.cells; ++i) {
    s.xi.segment(i * m, m) = s.lambda(i) * ws.DtD * s.sigma.segment(i * m, m);
  }
}

}  // namespace

Matrix PlasticityInstance::kernel_basis() const { return block_kernel(D, cells); }

PlasticityInstance build_instance(const PlasticityConfig& config) {
  PlasticityInstance inst;
  inst.cells = config.cells;
  inst.m = config.m;
  inst.n = config.n;
  inst.D = config.D;
  inst.A = config.A;
  inst.B = config.B;
  inst.weights = config.weights.size() == 0 ? Vector::Constant(config.cells, 1.0 / static_cast<Scalar>(config.cells))
                                            : config.weights;
  const Eigen::Index ns = inst.dim_sigma();
  if (inst.cells < 1 || inst.m < 1 || inst.n < 1) throw Error(ErrorCode::InvalidInstance, "dimensions must be positive");
  if (inst.D.rows() != inst.n || inst.D.cols() != inst.m) throw Error(ErrorCode::InvalidInstance, "D must be n x m");
  if (inst.A.rows() != ns || inst.A.cols() != ns) throw Error(ErrorCode::InvalidInstance, "A must be mN x mN");
  if (inst.B.cols() != ns) throw Error(ErrorCode::InvalidInstance, "B must have mN columns");
  if (inst.weights.size() != inst.cells || inst.weights.minCoeff() <= 0.0) {
    throw Error(ErrorCode::InvalidInstance, "cell weights must be positive, one per cell");
  }
  if ((inst.A - inst.A.transpose()).norm() > 1e-12 * (1.0 + inst.A.norm())) {
    throw Error(ErrorCode::InvalidInstance, "A is not symmetric");
  }
  const Scalar amin = Eigen::SelfAdjointEigenSolver<Matrix>(inst.A, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (!(amin > 1e-10 * (1.0 + inst.A.norm()))) {
    throw Error(ErrorCode::InvalidInstance, "A is not coercive (min eigenvalue " + std::to_string(amin) + ")");
  }
  const Matrix BH = inst.B * inst.kernel_basis();
  Eigen::Index rank = 0;
  if (BH.size() > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(BH);
    qr.setThreshold(1e-10);
    rank = qr.rank();
  }
  if (rank != inst.dim_v()) {
    throw Error(ErrorCode::InvalidInstance, "B restricted to H is not surjective (rank " + std::to_string(rank) +
                                                " < dim V = " + std::to_string(inst.dim_v()) + ")");
  }
  return inst;
}

PlasticityInstance random_plasticity_instance(std::uint64_t seed, Eigen::Index cells, Eigen::Index m,
                                              Eigen::Index n, Eigen::Index dim_v) {
  std::mt19937_64 rng(seed);
  PlasticityConfig c;
  c.cells = cells;
  c.m = m;
  c.n = n;
  c.D = random_gaussian(rng, n, m);
  const Matrix R = random_gaussian(rng, m * cells, m * cells);
  c.A = R * R.transpose() / static_cast<Scalar>(m * cells) + 0.5 * Matrix::Identity(m * cells, m * cells);
  c.B = random_gaussian(rng, dim_v, m * cells);
  std::uniform_real_distribution<Scalar> w(0.5, 1.5);
  c.weights.resize(cells);
  for (Eigen::Index i = 0; i < cells; ++i) c.weights(i) = w(rng) / static_cast<Scalar>(cells);
  return build_instance(c);
}

Vector random_plastic_load(const PlasticityInstance& inst, std::uint64_t seed, Scalar overload) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> level(0.2, overload);
  Vector target(inst.dim_sigma());
  const Matrix g = random_gaussian(rng, inst.m, inst.cells);
  for (Eigen::Index i = 0; i < inst.cells; ++i) {
    const Vector s = g.col(i);
    const Scalar r = (inst.D * s).norm();
    target.segment(i * inst.m, inst.m) = level(rng) * s / std::max(r, 1e-12);
  }
  return inst.B * target;
}

SaddleSolution solve_saddle(const PlasticityInstance& inst, const Vector& ell, const SaddleSolution* warm) {
  if (ell.size() != inst.dim_v()) throw Error(ErrorCode::InvalidArgument, "solve_saddle: ell has wrong size");
  const Workspace ws(inst);
  const Eigen::Index m = inst.m;
  const Scalar tau = kActiveTol;

  if (inst.dim_v() > 0) {
    const Vector s0 = inst.B.completeOrthogonalDecomposition().solve(ell);
    if ((inst.B * s0 - ell).norm() > 1e-10 * (1.0 + ell.norm())) {
      throw Error(ErrorCode::Infeasible, "solve_saddle: B sigma = ell has no solution");
    }
  }

  SaddleSolution sol;
  std::vector<Eigen::Index> active;
  Vector lam_cells;
  auto start_from_admm = [&]() {
    const AdmmResult a = admm(ws, ell);
    if (a.primal_gap > 1e-6 * (1.0 + a.sigma.norm())) {
      throw Error(ErrorCode::Infeasible, "solve_saddle: B sigma = ell does not meet K");
    }
    sol.sigma = a.sigma;
    lam_cells = a.lambda_guess;
    active.clear();
    for (Eigen::Index i = 0; i < inst.cells; ++i) {
      if (ws.yield(sol.sigma, i) >= 1.0 - 1e-7) active.push_back(i);
    }
    sol.u = Vector::Zero(inst.dim_v());
  };

  bool from_warm = warm != nullptr && warm->sigma.size() == inst.dim_sigma();
  if (from_warm) {
    sol.sigma = warm->sigma;
    sol.u = warm->u;
    lam_cells = warm->lambda;
    for (Eigen::Index i = 0; i < inst.cells; ++i) {
      if (warm->lambda(i) > 0.0 || ws.yield(sol.sigma, i) >= 1.0 - 1e-7) active.push_back(i);
    }
  } else {
    start_from_admm();
  }

  for (int round = 0;; ++round) {
    if (round == kActiveSetRounds) {
      if (!from_warm) throw Error(ErrorCode::NonConvergence, "solve_saddle: active set did not settle");
      from_warm = false;
      round = 0;
      start_from_admm();
    }
    Vector lam(static_cast<Eigen::Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) lam(static_cast<Eigen::Index>(a)) = lam_cells(active[a]);
    Vector sigma = sol.sigma, u = sol.u;
    const bool ok = newton_on_active_set(ws, ell, active, sigma, u, lam);
    if (!ok) {
      if (from_warm) {
        from_warm = false;
        round = -1;
        start_from_admm();
        continue;
      }
      throw Error(ErrorCode::NonConvergence, "solve_saddle: Newton polish failed");
    }
    sol.sigma = sigma;
    sol.u = u;
    lam_cells = Vector::Zero(inst.cells);
    for (std::size_t a = 0; a < active.size(); ++a) lam_cells(active[a]) = lam(static_cast<Eigen::Index>(a));

    Eigen::Index drop = -1, add = -1;
    Scalar worst_lam = -tau, worst_viol = 1.0 + tau;
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (lam(static_cast<Eigen::Index>(a)) < worst_lam) {
        worst_lam = lam(static_cast<Eigen::Index>(a));
        drop = static_cast<Eigen::Index>(a);
      }
    }
    for (Eigen::Index i = 0; i < inst.cells; ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      const Scalar y = ws.yield(sol.sigma, i);
      if (y > worst_viol) {
        worst_viol = y;
        add = i;
      }
    }
    if (drop >= 0) {
      active.erase(active.begin() + drop);
    } else if (add >= 0) {
      active.push_back(add);
      std::sort(active.begin(), active.end());
    } else {
      sol.iterations = round + 1;
      break;
    }
  }

  recover_multipliers(ws, sol, active);
  if (!ws.unique_u) {
    // Multipliers not determined by sigma; keep the Newton pair.
    sol.lambda = lam_cells.cwiseMax(0.0);
    sol.xi = Vector::Zero(inst.dim_sigma());
    for (Eigen::Index i = 0; i < inst.cells; ++i) sol.xi.segment(i * m, m) = sol.lambda(i) * ws.DtD * sol.sigma.segment(i * m, m);
  }
  sol.kkt_residual = kkt_defect(ws, ell, sol);
  return sol;
}

ViSolution solve_saddle_vi(const PlasticityInstance& inst, const Vector& ell) {
  const SaddleSolution s = solve_saddle(inst, ell);
  ViSolution v;
  v.x_bar = s.sigma;
  v.residual = s.kkt_residual;
  v.iterations = s.iterations;
  v.multipliers["sigma"] = s.sigma;
  v.multipliers["u"] = s.u;
  v.multipliers["lambda"] = s.lambda;
  v.multipliers["xi"] = s.xi;
  return v;
}

Scalar multiplier_identity_residual(const PlasticityInstance& inst, const SaddleSolution& sol) {
  const Matrix DtD = inst.D.transpose() * inst.D;
  Vector r = inst.A * sol.sigma + inst.B.transpose() * sol.u;
  for (Eigen::Index i = 0; i < inst.cells; ++i) {
    r.segment(i * inst.m, inst.m) += inst.weights(i) * sol.lambda(i) * DtD * sol.sigma.segment(i * inst.m, inst.m);
  }
  return r.cwiseAbs().maxCoeff();
}

QuadraticSubderivative q_elastoplastic(const PlasticityInstance& inst, const Vector& sigma, const Vector& xi) {
  return q_pointwise_ball(PointwiseBall{inst.D, inst.cells}, sigma, xi, inst.weights);
}

PlasticityDerivative plasticity_derivative(const PlasticityInstance& inst, const SaddleSolution& base,
                                           const Vector& dell) {
  if (dell.size() != inst.dim_v()) throw Error(ErrorCode::InvalidArgument, "plasticity_derivative: size mismatch");
  const QuadraticSubderivative Q = q_elastoplastic(inst, base.sigma, base.xi);
  const Eigen::Index ns = inst.dim_sigma();
  const Eigen::Index nv = inst.dim_v();
  const Matrix& Ec = Q.cone.eq();
  QuadraticProgram qp;
  qp.H = inst.A + Q.W;
  qp.f = Vector::Zero(ns);
  qp.E.resize(nv + Ec.rows(), ns);
  qp.E << inst.B, Ec;
  qp.e = Vector::Zero(nv + Ec.rows());
  qp.e.head(nv) = dell;
  qp.G = Q.cone.ineq();
  qp.h = Vector::Zero(qp.G.rows());
  QpResult r;
  try {
    r = solve_qp(qp);
  } catch (const Error& e) {
    throw Error(e.code(), std::string("plasticity_derivative: ") + e.what());
  }
  PlasticityDerivative d;
  d.dsigma = r.x;
  d.qp_value = 0.5 * r.x.dot(qp.H * r.x);
  const Workspace ws(inst);
  if (ws.unique_u && nv > 0) {
    const Matrix H = inst.kernel_basis();
    d.du = ws.HBt.colPivHouseholderQr().solve(Vector(-(H.transpose() * inst.A * d.dsigma)));
  } else {
    d.du = r.lambda.head(nv);
  }
  return d;
}

PlasticityFdReport plasticity_fd_check(const PlasticityInstance& inst, const Vector& ell, const Vector& dell,
                                       const std::vector<Scalar>& t_grid) {
  const SaddleSolution base = solve_saddle(inst, ell);
  const PlasticityDerivative d = plasticity_derivative(inst, base, dell);
  PlasticityFdReport rep;
  std::vector<Scalar> grid = t_grid;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  rep.t_grid = grid;
  SaddleSolution prev = base;
  const Scalar dn = dell.norm();
  for (Scalar t : grid) {
    const SaddleSolution s = solve_saddle(inst, ell + t * dell, &prev);
    const Vector ds = (s.sigma - base.sigma) / t;
    const Vector du = (s.u - base.u) / t;
    rep.sigma_errors.push_back((ds - d.dsigma).norm());
    rep.u_errors.push_back((du - d.du).norm());
    rep.lipschitz_ratios.push_back(dn > 0.0 ? (ds.norm() + du.norm()) / dn : 0.0);
    prev = s;
  }
  return rep;
}

std::vector<Scalar> plasticity_lipschitz_samples(const PlasticityInstance& inst, const Vector& ell,
                                                 std::uint64_t seed, int pairs, Scalar spread) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> nd;
  const SaddleSolution base = solve_saddle(inst, ell);
  std::vector<Scalar> ratios;
  ratios.reserve(static_cast<std::size_t>(pairs));
  const Eigen::Index nv = inst.dim_v();
  for (int k = 0; k < pairs; ++k) {
    Vector e1(nv), e2(nv);
    for (Eigen::Index i = 0; i < nv; ++i) {
      e1(i) = ell(i) + spread * nd(rng);
      e2(i) = ell(i) + spread * nd(rng);
    }
    const SaddleSolution s1 = solve_saddle(inst, e1, &base);
    const SaddleSolution s2 = solve_saddle(inst, e2, &s1);
    const Scalar de = (e1 - e2).norm();
    ratios.push_back(((s1.sigma - s2.sigma).norm() + (s1.u - s2.u).norm()) / de);
  }
  return ratios;
}

Scalar batch_max_variation(const std::vector<Scalar>& samples, int batches) {
  if (batches < 2 || samples.size() < static_cast<std::size_t>(batches)) return 0.0;
  const std::size_t per = samples.size() / static_cast<std::size_t>(batches);
  std::vector<Scalar> maxima;
  for (int b = 0; b < batches; ++b) {
    const auto first = samples.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(b));
    maxima.push_back(*std::max_element(first, first + static_cast<std::ptrdiff_t>(per)));
  }
  const Scalar mean = std::accumulate(maxima.begin(), maxima.end(), 0.0) / static_cast<Scalar>(maxima.size());
  Scalar var = 0.0;
  for (Scalar v : maxima) var += (v - mean) * (v - mean);
  var /= static_cast<Scalar>(maxima.size() - 1);
  return mean > 0.0 ? std::sqrt(var) / mean : 0.0;
}

}  // namespace vis
