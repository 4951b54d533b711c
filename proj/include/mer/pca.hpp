#pragma once

#include <Eigen/Dense>
#include <cstddef>

namespace mer {

struct PcaModel {
  Eigen::VectorXd mean;    // D
  Eigen::MatrixXd basis;   // D x d, orthonormal columns, descending variance
  Eigen::VectorXd variances;  // d, sample variance captured per component
  bool degenerate = false;    // some kept component has (near) zero variance

  static PcaModel identity(std::size_t dim);
};

// rows = n x D sample matrix, one sample per row; requires n >= 2 and
// d <= min(D, n - 1)
PcaModel pca_fit(const Eigen::MatrixXd& rows, std::size_t d);

Eigen::VectorXd pca_apply(const PcaModel& model, const Eigen::VectorXd& x);

}  // namespace mer
