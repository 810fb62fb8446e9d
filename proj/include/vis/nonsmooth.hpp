#pragma once

#include "vis/types.hpp"

#include <functional>
#include <string>
#include <variant>

namespace vis {

// ---------------------------------------------------------------------------
// Expression-friendly proximal kernels.

/// Componentwise soft thresholding: sign(v) * max(|v| - t, 0).
template <typename DerivedV, typename DerivedT>
Vector soft_threshold(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedT>& t) {
  return (v.array().abs() - t.array()).max(0.0) * v.array().sign();
}

template <typename DerivedV, typename DerivedL, typename DerivedU>
Vector clamp_box(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedL>& lo,
                 const Eigen::MatrixBase<DerivedU>& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

// ---------------------------------------------------------------------------

/// {x : lower <= x <= upper}
struct BoxSet {
  Vector lower;
  Vector upper;
};

/// {x : G x <= h}
struct Polyhedron {
  Matrix G;
  Vector h;
};

/// {x = (x_1, ..., x_N), x_i in R^m : |D x_i| <= 1 for every block}.
struct PointwiseBall {
  Matrix D;  ///< n x m
  Eigen::Index blocks = 1;

  Eigen::Index block_size() const { return D.cols(); }
};

/// sum_i w_i |x_i|
struct WeightedOneNorm {
  Vector weights;
};

/// {x : |x| >= radius}; nonconvex, radius-prox-regular.
struct BallComplement {
  Scalar radius = 1.0;
};

/// User supplied functional with its own proximal map.
struct CustomFunctional {
  std::string name;
  std::function<Scalar(const Vector&)> eval;
  std::function<Vector(const Vector&, Scalar)> prox;
  std::function<Matrix(const Vector&, Scalar)> prox_jacobian;  ///< optional
};

enum class NonsmoothKind {
  IndicatorBox,
  IndicatorPolyhedron,
  IndicatorPointwiseBall,
  OneNormScaled,
  IndicatorBallComplement,
  Custom,
};

const char* to_string(NonsmoothKind kind);

/// The nonsmooth part j of a variational inequality. Every built-in kind has
/// an exact proximal map (closed form, secular equation, or exact QP).
class NonsmoothFunctional {
 public:
  using Data = std::variant<BoxSet, Polyhedron, PointwiseBall, WeightedOneNorm, BallComplement,
                            CustomFunctional>;

  explicit NonsmoothFunctional(Data data);

  static NonsmoothFunctional box(Vector lower, Vector upper);
  static NonsmoothFunctional polyhedron(Matrix G, Vector h);
  static NonsmoothFunctional pointwise_ball(Matrix D, Eigen::Index blocks);
  static NonsmoothFunctional one_norm(Vector weights);
  static NonsmoothFunctional ball_complement(Scalar radius);

  NonsmoothKind kind() const;
  const Data& data() const { return data_; }
  bool is_convex() const;
  bool is_indicator() const;

  /// j(x) in R or +inf. Indicators accept points within kFeasTol of the set.
  Scalar evaluate(const Vector& x) const;

  /// argmin_z sigma j(z) + 0.5 |z - v|^2. For BallComplement and v = 0 a fixed
  /// element of the (set-valued) projection is returned.
  Vector prox(const Vector& v, Scalar sigma) const;

  /// An element of the generalized Jacobian of prox(., sigma) at v.
  Matrix prox_jacobian(const Vector& v, Scalar sigma) const;

  /// Dimension the functional is defined on, or -1 when any size is accepted.
  Eigen::Index dim() const;

 private:
  Data data_;
  // Cached SVD of D for the pointwise-ball projection.
  Matrix ball_V_;
  Vector ball_s_;
};

/// Projection of one block onto {z : |D z| <= 1}, with cached SVD factors
/// (D = U diag(s) V'). Returns the multiplier of the active constraint.
Vector project_ellipsoidal_block(const Vector& v, const Matrix& D, const Matrix& V, const Vector& s,
                                 Scalar* multiplier = nullptr);

}  // namespace vis
