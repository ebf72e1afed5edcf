#pragma once

#include <Eigen/Dense>

namespace salt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Ratio of largest to smallest singular value; +inf for a singular matrix.
double condition_number(const Matrix& m);

}  // namespace salt
