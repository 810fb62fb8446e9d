#include "vis/cone.hpp"

#include "vis/qp.hpp"

namespace vis {

const char* to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::Polyhedral: return "polyhedral";
    case ConeKind::Subspace: return "subspace";
    case ConeKind::WeightedSubspace: return "weighted_subspace";
    case ConeKind::AtomsAtPoints: return "atoms_at_points";
  }
  return "unknown";
}

ConeSpec ConeSpec::polyhedral(Matrix eq, Matrix ineq) {
  ConeSpec c;
  c.kind_ = ConeKind::Polyhedral;
  c.dim_ = eq.rows() > 0 ? eq.cols() : ineq.cols();
  if (eq.rows() > 0 && ineq.rows() > 0 && eq.cols() != ineq.cols()) {
    throw Error(ErrorCode::InvalidArgument, "cone: eq/ineq column mismatch");
  }
  c.eq_ = eq.rows() > 0 ? std::move(eq) : Matrix(0, c.dim_);
  c.ineq_ = ineq.rows() > 0 ? std::move(ineq) : Matrix(0, c.dim_);
  return c;
}

ConeSpec ConeSpec::whole_space(Eigen::Index dim) {
  return polyhedral(Matrix(0, dim), Matrix(0, dim));
}

ConeSpec ConeSpec::subspace(const Matrix& basis) {
  const Eigen::Index n = basis.rows();
  ConeSpec c = polyhedral(null_space(basis.transpose(), n).transpose(), Matrix(0, n));
  c.kind_ = ConeKind::Subspace;
  return c;
}

ConeSpec ConeSpec::weighted_subspace(const Matrix& basis, Vector weights) {
  ConeSpec c = subspace(basis);
  c.kind_ = ConeKind::WeightedSubspace;
  c.weights_ = std::move(weights);
  return c;
}

ConeSpec ConeSpec::atoms(Vector locations) {
  ConeSpec c = whole_space(locations.size());
  c.kind_ = ConeKind::AtomsAtPoints;
  c.atoms_ = std::move(locations);
  return c;
}

bool ConeSpec::contains(const Vector& z, Scalar tol) const {
  if (z.size() != dim_) return false;
  const Scalar scale = tol * (1.0 + z.norm());
  if (eq_.rows() > 0 && (eq_ * z).cwiseAbs().maxCoeff() > scale) return false;
  if (ineq_.rows() > 0 && (ineq_ * z).maxCoeff() > scale) return false;
  return true;
}

Vector ConeSpec::project(const Vector& v) const {
  if (eq_.rows() == 0 && ineq_.rows() == 0) return v;
  if (ineq_.rows() == 0) {
    const Matrix U = span_basis();
    return U * (U.transpose() * v);
  }
  if (eq_.rows() == 0) return project_polyhedron(v, eq_, Vector(0), ineq_, Vector::Zero(ineq_.rows()));
  // Reduced coordinates on {E z = 0} drop dependent equality rows.
  const Matrix U = span_basis();
  if (U.cols() == 0) return Vector::Zero(dim_);
  const Vector w = project_polyhedron(U.transpose() * v, Matrix(0, U.cols()), Vector(0), ineq_ * U,
                                      Vector::Zero(ineq_.rows()));
  return U * w;
}

Matrix ConeSpec::span_basis() const { return null_space(eq_, dim_); }

}  // namespace vis
