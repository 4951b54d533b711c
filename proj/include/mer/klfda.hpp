#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mer/kernel.hpp"

namespace mer {

struct KlfdaConfig {
  KernelParams kernel;
  double beta = 0.01;  // regularizer on the within-class scatter
  std::size_t r = 0;   // embedding dimension; 0 = min(#classes - 1, n)
  std::size_t local_scaling_knn = 7;
};

struct KlfdaModel {
  Eigen::MatrixXd train_points;  // n x D, one row per training sample
  KernelParams kernel;
  Eigen::MatrixXd coeffs;      // n x r expansion coefficients
  Eigen::VectorXd eigenvalues;  // r, descending
  double beta = 0.0;
  double max_eigen_residual = 0.0;  // ||S_b a - lambda B a|| / ||a||, worst kept pair
};

// labels assign each row of X to a class; every class needs >= 2 members
KlfdaModel klfda_fit(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                     const KlfdaConfig& cfg);

Eigen::VectorXd klfda_embed(const KlfdaModel& model, std::span<const double> x);

double klfda_distance(const KlfdaModel& model, std::span<const double> x,
                      std::span<const double> y);

}  // namespace mer
