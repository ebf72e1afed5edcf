#include "salt/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "salt/error.hpp"

namespace salt {

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0) throw DimensionError("condition_number: empty matrix");
  const double smin = sv(sv.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smin;
}

Index default_subspace_dim(Index n, Index D) {
  Index d = static_cast<Index>(std::llround(0.39 * static_cast<double>(D)));
  d = std::max<Index>(d, 1);
  return std::min(d, std::min(n - 1, D));
}

namespace {

// Largest-absolute-entry-non-negative convention, ties to the lowest index.
void apply_sign_convention(Matrix& basis) {
  for (Index j = 0; j < basis.cols(); ++j) {
    Index best = 0;
    double best_abs = std::abs(basis(0, j));
    for (Index i = 1; i < basis.rows(); ++i) {
      const double a = std::abs(basis(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (basis(best, j) < 0.0) basis.col(j) = -basis.col(j);
  }
}

void check_pair(const Subspace& Zt, const Subspace& Zs, const char* where) {
  if (Zt.dim() != Zs.dim()) {
    std::ostringstream os;
    os << where << ": subspace dims differ (" << Zt.dim() << " vs " << Zs.dim()
       << ")";
    throw DimensionError(os.str());
  }
  if (Zt.ambient_dim() != Zs.ambient_dim()) {
    std::ostringstream os;
    os << where << ": ambient dims differ (" << Zt.ambient_dim() << " vs "
       << Zs.ambient_dim() << ")";
    throw DimensionError(os.str());
  }
}

}  // namespace

Subspace fit_subspace(const Matrix& X, Index d) {
  const Index n = X.rows();
  const Index D = X.cols();
  if (n < 2) throw DimensionError("fit_subspace: need at least 2 samples");
  if (d < 1 || d > std::min(n - 1, D)) {
    std::ostringstream os;
    os << "fit_subspace: d = " << d << " outside [1, " << std::min(n - 1, D)
       << "]";
    throw DimensionError(os.str());
  }
  if (!X.allFinite())
    throw NumericalError("fit_subspace: non-finite feature values");

  Vector center = X.colwise().mean();
  Matrix centered = X.rowwise() - center.transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("fit_subspace: SVD failed to converge");

  Matrix basis = svd.matrixV().leftCols(d);
  apply_sign_convention(basis);
  return Subspace{std::move(basis), std::move(center)};
}

AlignmentMap closed_form_alignment(const Subspace& Zt, const Subspace& Zs) {
  check_pair(Zt, Zs, "closed_form_alignment");
  return AlignmentMap{Zt.basis.transpose() * Zs.basis};
}

double alignment_cost(const Subspace& Zt, const AlignmentMap& phi,
                      const Subspace& Zs) {
  check_pair(Zt, Zs, "alignment_cost");
  if (phi.phi.rows() != Zt.dim() || phi.phi.cols() != Zs.dim())
    throw DimensionError("alignment_cost: phi shape does not match subspaces");
  return (Zt.basis * phi.phi - Zs.basis).squaredNorm();
}

Matrix align_features(const Matrix& Xt, const Subspace& Zt,
                      const AlignmentMap& phi, const Subspace& Zs) {
  check_pair(Zt, Zs, "align_features");
  if (Xt.cols() != Zt.ambient_dim())
    throw DimensionError("align_features: feature dim does not match subspace");
  if (phi.phi.rows() != Zt.dim() || phi.phi.cols() != Zs.dim())
    throw DimensionError("align_features: phi shape does not match subspaces");
  Matrix centered = Xt.rowwise() - Zt.center.transpose();
  Matrix out = centered * Zt.basis * phi.phi * Zs.basis.transpose();
  out.rowwise() += Zs.center.transpose();
  return out;
}

Matrix source_aligned_target_basis(const Subspace& Zt, const Subspace& Zs) {
  check_pair(Zt, Zs, "source_aligned_target_basis");
  return Zt.basis * (Zt.basis.transpose() * Zs.basis);
}

}  // namespace salt
