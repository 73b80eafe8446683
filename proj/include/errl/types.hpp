#pragma once

#include <Eigen/Dense>

namespace errl {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVecX = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Node coordinates, one (x, y) row per node.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

using Matd = MatX<double>;
using Vecd = VecX<double>;
using Veci = VecX<int>;

}  // namespace errl
