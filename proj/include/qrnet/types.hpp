#pragma once

#include <Eigen/Dense>

namespace qrnet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace qrnet
