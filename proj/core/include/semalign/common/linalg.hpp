#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace semalign {

// Row-major so that per-entity rows are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace semalign
