#pragma once

#include "salt/linalg.hpp"

namespace salt {

// Orthonormal basis of a d-dimensional linear subspace of the ambient
// feature space, together with the mean that was subtracted before fitting.
struct Subspace {
  Matrix basis;   // D x d, orthonormal columns
  Vector center;  // D

  Index ambient_dim() const { return basis.rows(); }
  Index dim() const { return basis.cols(); }
};

// Trainable d x d map taking target-subspace coordinates to source-subspace
// coordinates. General linear, no orthogonality constraint.
struct AlignmentMap {
  Matrix phi;

  Index dim() const { return phi.rows(); }
};

/// Top-d right singular vectors of the row-mean-centered X. Sign convention:
/// in each column the entry of largest absolute value is non-negative, ties
/// broken by lowest index, so identical inputs give bit-identical bases.
Subspace fit_subspace(const Matrix& X, Index d);

/// Default subspace dimension for ambient dimension D: round(0.39 * D)
/// clamped to [1, min(n - 1, D)].
Index default_subspace_dim(Index n, Index D);

/// Global minimizer Zt^T Zs of the alignment cost.
AlignmentMap closed_form_alignment(const Subspace& Zt, const Subspace& Zs);

/// || Zt * phi - Zs ||_F^2
double alignment_cost(const Subspace& Zt, const AlignmentMap& phi,
                      const Subspace& Zs);

/// Re-projects target rows into ambient space through the aligned subspace:
/// (Xt - center_t) Zt phi Zs^T + center_s.
Matrix align_features(const Matrix& Xt, const Subspace& Zt,
                      const AlignmentMap& phi, const Subspace& Zs);

/// Source-aligned target basis Zt Zt^T Zs.
Matrix source_aligned_target_basis(const Subspace& Zt, const Subspace& Zs);

}  // namespace salt
