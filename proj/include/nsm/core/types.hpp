#pragma once

#include <Eigen/Dense>

namespace nsm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using Index = Eigen::Index;

}  // namespace nsm
