#pragma once

#include <Eigen/Dense>

namespace tracerlab {

// Spatial dimension is capped at 3: cell coordinates occupy three words of the
// Philox counter used to draw per-cell field parameters.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using CellIndex = Eigen::Matrix<int, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

}  // namespace tracerlab
