#pragma once

#include <Eigen/Dense>

namespace visa {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Lower bound applied to every variance entry in the pipeline.
inline constexpr double kVarFloor = 1e-6;

// Weight below which a mixture component carries no usable mass.
inline constexpr double kWeightEps = 1e-12;

}  // namespace visa
