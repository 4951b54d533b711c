#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "mer/pca.hpp"

namespace mer {

struct MahalanobisMetric {
  Eigen::MatrixXd m_matrix;  // d x d, symmetric PSD
  PcaModel pca;              // applied before the quadratic form
  std::string channel_name;
};

// zeroes negative eigenvalues and reconstructs; exact symmetry enforced
Eigen::MatrixXd psd_clip(const Eigen::MatrixXd& sym);

// pairs live in the (already projected) d-dimensional space; the returned
// metric carries an identity projection which callers may replace
MahalanobisMetric kissme_fit(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& similar,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& dissimilar);

double mahalanobis_distance(const MahalanobisMetric& metric, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y);

}  // namespace mer
