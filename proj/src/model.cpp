#include "salt/model.hpp"

#include <cmath>

#include "salt/error.hpp"
#include "salt/rng.hpp"

namespace salt {

SoftmaxClassifier make_classifier(Index feature_dim, Index class_count,
                                  std::uint64_t seed) {
  if (feature_dim < 1 || class_count < 2)
    throw DimensionError("make_classifier: need D >= 1 and C >= 2");
  rng::Engine rng(seed);
  const double s =
      std::sqrt(6.0 / static_cast<double>(feature_dim + class_count));
  Matrix w(feature_dim, class_count);
  for (Index i = 0; i < feature_dim; ++i)
    for (Index j = 0; j < class_count; ++j) w(i, j) = rng.uniform(-s, s);
  return SoftmaxClassifier{std::move(w), Vector::Zero(class_count)};
}

Matrix predict_probs(const SoftmaxClassifier& clf, const Matrix& X) {
  if (X.cols() != clf.feature_dim())
    throw DimensionError("predict_probs: feature dim does not match classifier");
  if (!X.allFinite())
    throw NumericalError("predict_probs: non-finite features");
  Matrix logits = X * clf.weights;
  logits.rowwise() += clf.bias.transpose();
  Vector row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  Matrix probs = logits.array().exp();
  Vector row_sum = probs.rowwise().sum();
  probs.array().colwise() /= row_sum.array();
  return probs;
}

std::vector<int> predict_classes(const SoftmaxClassifier& clf, const Matrix& X) {
  Matrix probs = predict_probs(clf, X);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = static_cast<int>(j);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw DimensionError("accuracy: size mismatch or empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

void sgd_momentum_step(SgdMomentumState& state, Matrix& params,
                       const Matrix& grads) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
      params.rows() != state.velocity.rows() ||
      params.cols() != state.velocity.cols())
    throw DimensionError("sgd_momentum_step: shape mismatch");
  state.velocity = state.momentum * state.velocity - state.learning_rate * grads;
  params += state.velocity;
}

void adam_step(AdamState& state, Matrix& params, const Matrix& grads) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
      params.rows() != state.first_moment.rows() ||
      params.cols() != state.first_moment.cols())
    throw DimensionError("adam_step: shape mismatch");
  state.step_count += 1;
  state.first_moment =
      state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment +
                        (1.0 - state.beta2) * grads.array().square().matrix();
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  Matrix m_hat = state.first_moment / c1;
  Matrix v_hat = state.second_moment / c2;
  params.array() -= state.learning_rate * m_hat.array() /
                    (v_hat.array().sqrt() + state.epsilon);
}

}  // namespace salt
