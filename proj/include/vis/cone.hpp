#pragma once

#include "vis/types.hpp"

namespace vis {

enum class ConeKind { Polyhedral, Subspace, WeightedSubspace, AtomsAtPoints };

const char* to_string(ConeKind kind);

/// Closed convex cone {z : E z = 0, G z <= 0} in R^dim. Subspaces are stored
/// through the equality block; the atom kind is the full coordinate space of
/// atom weights, with the atom locations kept for reporting.
class ConeSpec {
 public:
  static ConeSpec polyhedral(Matrix eq, Matrix ineq);
  static ConeSpec whole_space(Eigen::Index dim);
  static ConeSpec subspace(const Matrix& basis);
  /// In finite dimensions the weighted finiteness condition is vacuous; the
  /// weights are carried for bookkeeping only.
  static ConeSpec weighted_subspace(const Matrix& basis, Vector weights);
  static ConeSpec atoms(Vector locations);

  ConeKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  const Matrix& eq() const { return eq_; }
  const Matrix& ineq() const { return ineq_; }
  const Vector& weights() const { return weights_; }
  const Vector& atom_locations() const { return atoms_; }

  bool contains(const Vector& z, Scalar tol = kActiveTol) const;
  /// Euclidean projection (exact QP).
  Vector project(const Vector& v) const;
  /// Orthonormal basis of {E z = 0}, the smallest subspace known to contain the cone.
  Matrix span_basis() const;
  bool is_subspace() const { return ineq_.rows() == 0; }

 private:
  ConeKind kind_ = ConeKind::Polyhedral;
  Eigen::Index dim_ = 0;
  Matrix eq_;
  Matrix ineq_;
  Vector weights_;
  Vector atoms_;
};

}  // namespace vis
