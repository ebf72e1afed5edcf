#pragma once

#include <map>
#include <string>
#include <vector>

#include "salt/linalg.hpp"
#include "salt/model.hpp"
#include "salt/subspace.hpp"

namespace salt {

struct LossWeights {
  double lambda_c = 0.1;
  double lambda_cb = 0.1;
  double gamma_c = 0.1;
  double gamma_cb = 0.1;

  void validate() const;
};

// total is always the weighted sum of the components present.
struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components;  // raw, unweighted values
};

/// -(1/m) sum_i ln probs[i, labels[i]]. Probabilities are clamped to
/// [1e-12, 1 - 1e-12] before the log.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

/// Mean Shannon entropy of the rows, with 0 ln 0 := 0.
double conditional_entropy(const Matrix& probs);

/// Per-class Bernoulli BCE between the column-mean prediction and the
/// uniform vector, averaged over classes. Minimized at p_bar = 1/C.
double class_balance(const Matrix& probs);

/// Primary objective: source CE + lambda_c * conditional entropy
/// + lambda_cb * class balance, the entropy terms on the aligned target.
/// An empty target batch contributes zero to both target terms.
LossValue primary_loss(const SoftmaxClassifier& clf, const Matrix& Xs,
                       const std::vector<int>& ys, const Matrix& Xt_aligned,
                       const LossWeights& w);

/// Alignment cost + gamma_c * conditional entropy + gamma_cb * class
/// balance, with the entropy terms evaluated on classifier outputs of
/// align_features(Xt_val, Zt, phi, Zs). Classifier is treated as constant.
LossValue auxiliary_loss(const AlignmentMap& phi, const Subspace& Zt,
                         const Subspace& Zs, const SoftmaxClassifier& clf,
                         const Matrix& Xt_val, const LossWeights& w);

struct ThetaGrad {
  Matrix weights;  // D x C
  Vector bias;     // C
};

/// Analytic d(primary_loss.total)/dTheta.
ThetaGrad grad_primary_wrt_theta(const SoftmaxClassifier& clf, const Matrix& Xs,
                                 const std::vector<int>& ys,
                                 const Matrix& Xt_aligned, const LossWeights& w);

/// Analytic d(auxiliary_loss.total)/dPhi: 2 Zt^T (Zt phi - Zs) plus the
/// entropy terms chained through the re-projection.
Matrix grad_auxiliary_wrt_phi(const AlignmentMap& phi, const Subspace& Zt,
                              const Subspace& Zs, const SoftmaxClassifier& clf,
                              const Matrix& Xt_val, const LossWeights& w);

namespace detail {

/// dLoss/dLogits from dLoss/dProbs through row-wise softmax:
/// out_ik = P_ik * (G_ik - sum_j G_ij P_ij).
Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs);

/// dLoss/dLogits of the two target regularizers, already weighted:
/// c_weight * d(cond entropy) + cb_weight * d(class balance).
Matrix target_regularizer_logit_grad(const Matrix& probs, double c_weight,
                                     double cb_weight);

}  // namespace detail

}  // namespace salt
