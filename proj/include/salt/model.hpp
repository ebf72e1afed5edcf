#pragma once

#include <cstdint>
#include <vector>

#include "salt/linalg.hpp"

namespace salt {

// Single linear softmax layer; the whole of Theta.
struct SoftmaxClassifier {
  Matrix weights;  // D x C
  Vector bias;     // C

  Index feature_dim() const { return weights.rows(); }
  Index class_count() const { return weights.cols(); }
};

/// Weights ~ uniform(-s, s) with s = sqrt(6 / (D + C)), bias zero.
SoftmaxClassifier make_classifier(Index feature_dim, Index class_count,
                                  std::uint64_t seed);

/// Row-stochastic softmax(X W + b), max-subtracted for stability.
Matrix predict_probs(const SoftmaxClassifier& clf, const Matrix& X);

/// Argmax class per row; ties go to the lowest class index.
std::vector<int> predict_classes(const SoftmaxClassifier& clf, const Matrix& X);

/// Fraction of rows whose argmax matches the label.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// -- optimizers -----------------------------------------------------------

// Heavy-ball SGD: v <- mu v - eta g; theta <- theta + v.
struct SgdMomentumState {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  Matrix velocity;  // zero, parameter-shaped

  SgdMomentumState(double lr, double mu, Index rows, Index cols)
      : learning_rate(lr), momentum(mu), velocity(Matrix::Zero(rows, cols)) {}
};

void sgd_momentum_step(SgdMomentumState& state, Matrix& params,
                       const Matrix& grads);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Matrix first_moment;
  Matrix second_moment;
  long step_count = 0;

  AdamState(double lr, Index rows, Index cols)
      : learning_rate(lr),
        first_moment(Matrix::Zero(rows, cols)),
        second_moment(Matrix::Zero(rows, cols)) {}
};

/// Bias-corrected Adam update.
void adam_step(AdamState& state, Matrix& params, const Matrix& grads);

}  // namespace salt
