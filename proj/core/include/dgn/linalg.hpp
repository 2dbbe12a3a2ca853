#pragma once

#include <Eigen/Core>

namespace dgn {

/// Row-major so that a row (one point, one embedding) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Norms below this are treated as zero vectors.
inline constexpr double kZeroNorm = 1e-12;

/// Floor applied to probabilities and mixture weights inside logarithms.
inline constexpr double kLogFloor = 1e-12;

}  // namespace dgn
