#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mess {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace mess
