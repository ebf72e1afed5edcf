#include "salt/losses.hpp"

#include <cmath>
#include <sstream>

#include "salt/error.hpp"

namespace salt {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kProbCeil = 1.0 - 1e-12;
constexpr double kRowSumTol = 1e-6;

double clamp_prob(double p) {
  if (p < kProbFloor) return kProbFloor;
  if (p > kProbCeil) return kProbCeil;
  return p;
}

void check_row_stochastic(const Matrix& probs, const char* where) {
  if (probs.rows() == 0 || probs.cols() == 0)
    throw DimensionError(std::string(where) + ": empty probability matrix");
  if (!probs.allFinite())
    throw NumericalError(std::string(where) + ": non-finite probabilities");
  for (Index i = 0; i < probs.rows(); ++i) {
    if (std::abs(probs.row(i).sum() - 1.0) > kRowSumTol) {
      std::ostringstream os;
      os << where << ": row " << i << " sums to " << probs.row(i).sum();
      throw DomainError(os.str());
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  const double vals[] = {lambda_c, lambda_cb, gamma_c, gamma_cb};
  for (double v : vals) {
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError("loss weights must be finite and non-negative");
  }
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  check_row_stochastic(probs, "cross_entropy");
  const Index m = probs.rows();
  const Index C = probs.cols();
  if (static_cast<Index>(labels.size()) != m)
    throw DimensionError("cross_entropy: label count does not match rows");
  double sum = 0.0;
  for (Index i = 0; i < m; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= C) {
      std::ostringstream os;
      os << "cross_entropy: label " << y << " outside [0, " << C << ")";
      throw DomainError(os.str());
    }
    sum += std::log(clamp_prob(probs(i, y)));
  }
  return -sum / static_cast<double>(m);
}

double conditional_entropy(const Matrix& probs) {
  check_row_stochastic(probs, "conditional_entropy");
  const Index m = probs.rows();
  double sum = 0.0;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      sum += p * std::log(clamp_prob(p));  // 0 ln 0 := 0
    }
  }
  return -sum / static_cast<double>(m);
}

double class_balance(const Matrix& probs) {
  check_row_stochastic(probs, "class_balance");
  const Index C = probs.cols();
  const double u = 1.0 / static_cast<double>(C);
  Vector p_bar = probs.colwise().mean();
  double sum = 0.0;
  for (Index j = 0; j < C; ++j) {
    const double p = clamp_prob(p_bar(j));
    if (p <= 0.0 || p >= 1.0)
      throw NumericalError("class_balance: mean prediction outside (0, 1)");
    sum += u * std::log(p) + (1.0 - u) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(C);
}

LossValue primary_loss(const SoftmaxClassifier& clf, const Matrix& Xs,
                       const std::vector<int>& ys, const Matrix& Xt_aligned,
                       const LossWeights& w) {
  w.validate();
  if (Xs.rows() == 0) throw DimensionError("primary_loss: empty source batch");
  Matrix probs_s = predict_probs(clf, Xs);
  const double ce = cross_entropy(probs_s, ys);

  double ent = 0.0;
  double cb = 0.0;
  if (Xt_aligned.rows() > 0) {
    Matrix probs_t = predict_probs(clf, Xt_aligned);
    ent = conditional_entropy(probs_t);
    cb = class_balance(probs_t);
  }

  LossValue out;
  out.components["ce"] = ce;
  out.components["cond_entropy"] = ent;
  out.components["class_balance"] = cb;
  out.total = ce + w.lambda_c * ent + w.lambda_cb * cb;
  return out;
}

LossValue auxiliary_loss(const AlignmentMap& phi, const Subspace& Zt,
                         const Subspace& Zs, const SoftmaxClassifier& clf,
                         const Matrix& Xt_val, const LossWeights& w) {
  w.validate();
  const double align = alignment_cost(Zt, phi, Zs);

  double ent = 0.0;
  double cb = 0.0;
  if (Xt_val.rows() > 0) {
    Matrix aligned = align_features(Xt_val, Zt, phi, Zs);
    Matrix probs = predict_probs(clf, aligned);
    ent = conditional_entropy(probs);
    cb = class_balance(probs);
  }

  LossValue out;
  out.components["align_cost"] = align;
  out.components["cond_entropy"] = ent;
  out.components["class_balance"] = cb;
  out.total = align + w.gamma_c * ent + w.gamma_cb * cb;
  return out;
}

namespace detail {

Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs) {
  if (probs.rows() != dprobs.rows() || probs.cols() != dprobs.cols())
    throw DimensionError("softmax_backward: shape mismatch");
  Vector row_dot = (dprobs.array() * probs.array()).rowwise().sum();
  return probs.array() * (dprobs.array().colwise() - row_dot.array());
}

Matrix target_regularizer_logit_grad(const Matrix& probs, double c_weight,
                                     double cb_weight) {
  const Index m = probs.rows();
  const Index C = probs.cols();
  const double inv_m = 1.0 / static_cast<double>(m);

  // conditional entropy: dH/dP_ik = -(1/m)(ln P_ik + 1)
  Matrix dprobs = Matrix::Zero(m, C);
  if (c_weight != 0.0) {
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < C; ++j)
        dprobs(i, j) = -c_weight * inv_m * (std::log(clamp_prob(probs(i, j))) + 1.0);
  }

  // class balance: dCB/dP_ij = -(1/(mC)) (u / p_bar_j - (1-u)/(1 - p_bar_j))
  if (cb_weight != 0.0) {
    const double u = 1.0 / static_cast<double>(C);
    Vector p_bar = probs.colwise().mean();
    for (Index j = 0; j < C; ++j) {
      const double p = clamp_prob(p_bar(j));
      const double q =
          -(u / p - (1.0 - u) / (1.0 - p)) / static_cast<double>(C);
      for (Index i = 0; i < m; ++i) dprobs(i, j) += cb_weight * inv_m * q;
    }
  }

  return softmax_backward(probs, dprobs);
}

}  // namespace detail

ThetaGrad grad_primary_wrt_theta(const SoftmaxClassifier& clf, const Matrix& Xs,
                                 const std::vector<int>& ys,
                                 const Matrix& Xt_aligned, const LossWeights& w) {
  w.validate();
  const Index C = clf.class_count();
  const Index m_s = Xs.rows();
  if (m_s == 0) throw DimensionError("grad_primary_wrt_theta: empty source");
  if (static_cast<Index>(ys.size()) != m_s)
    throw DimensionError("grad_primary_wrt_theta: label count mismatch");

  // source cross-entropy: dCE/dLogits = (P - Y) / m
  Matrix probs_s = predict_probs(clf, Xs);
  Matrix dlogits_s = probs_s;
  const double inv_ms = 1.0 / static_cast<double>(m_s);
  for (Index i = 0; i < m_s; ++i) {
    const int y = ys[static_cast<std::size_t>(i)];
    if (y < 0 || y >= C)
      throw DomainError("grad_primary_wrt_theta: label outside [0, C)");
    dlogits_s(i, y) -= 1.0;
  }
  dlogits_s *= inv_ms;

  ThetaGrad g;
  g.weights = Xs.transpose() * dlogits_s;
  g.bias = dlogits_s.colwise().sum();

  if (Xt_aligned.rows() > 0 && (w.lambda_c != 0.0 || w.lambda_cb != 0.0)) {
    Matrix probs_t = predict_probs(clf, Xt_aligned);
    Matrix dlogits_t =
        detail::target_regularizer_logit_grad(probs_t, w.lambda_c, w.lambda_cb);
    g.weights += Xt_aligned.transpose() * dlogits_t;
    g.bias += dlogits_t.colwise().sum();
  }
  return g;
}

Matrix grad_auxiliary_wrt_phi(const AlignmentMap& phi, const Subspace& Zt,
                              const Subspace& Zs, const SoftmaxClassifier& clf,
                              const Matrix& Xt_val, const LossWeights& w) {
  w.validate();
  Matrix grad = 2.0 * Zt.basis.transpose() * (Zt.basis * phi.phi - Zs.basis);

  if (Xt_val.rows() > 0 && (w.gamma_c != 0.0 || w.gamma_cb != 0.0)) {
    Matrix aligned = align_features(Xt_val, Zt, phi, Zs);
    Matrix probs = predict_probs(clf, aligned);
    Matrix dlogits =
        detail::target_regularizer_logit_grad(probs, w.gamma_c, w.gamma_cb);
    // logits = ((Xt - c_t) Zt) phi (Zs^T W) + const
    Matrix M = (Xt_val.rowwise() - Zt.center.transpose()) * Zt.basis;
    grad += M.transpose() * dlogits * clf.weights.transpose() * Zs.basis;
  }
  return grad;
}

}  // namespace salt
