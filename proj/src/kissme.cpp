#include "mer/kissme.hpp"

#include <cmath>

#include "mer/util.hpp"

namespace mer {

namespace {

Eigen::MatrixXd second_moment(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs,
    Eigen::Index d, const char* what) {
  if (pairs.empty()) throw Error(std::string("kissme_fit: no ") + what + " pairs");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [x, y] : pairs) {
    if (x.size() != d || y.size() != d)
      throw Error(std::string("kissme_fit: inconsistent dimensions in ") + what +
                  " pairs");
    const Eigen::VectorXd diff = x - y;
    sigma.noalias() += diff * diff.transpose();
  }
  sigma /= static_cast<double>(pairs.size());
  return sigma;
}

// inverse through the eigendecomposition, regularized when ill-conditioned
Eigen::MatrixXd stable_inverse(Eigen::MatrixXd sigma, const char* what) {
  const Eigen::Index d = sigma.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  if (eig.info() != Eigen::Success)
    throw Error(std::string("kissme_fit: eigendecomposition of the ") + what +
                " moment matrix failed");
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  const bool ill = lmin <= 0.0 || lmax / lmin > 1e12;
  if (ill) {
    const double gamma = 1e-6 * sigma.trace() / static_cast<double>(d);
    if (!(gamma > 0.0))
      throw Error(std::string("kissme_fit: ") + what +
                  " moment matrix is singular; reduce the projection dimension or "
                  "provide more pairs");
    sigma += gamma * Eigen::MatrixXd::Identity(d, d);
    eig.compute(sigma);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
      throw Error(std::string("kissme_fit: ") + what +
                  " moment matrix is not invertible even after regularization; "
                  "reduce the projection dimension");
  }
  return eig.eigenvectors() *
         eig.eigenvalues().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

Eigen::MatrixXd psd_clip(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      Eigen::MatrixXd(0.5 * (sym + sym.transpose())));
  if (eig.info() != Eigen::Success) throw Error("psd_clip: eigendecomposition failed");
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out =
      eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

MahalanobisMetric kissme_fit(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& similar,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& dissimilar) {
  if (similar.empty() || dissimilar.empty())
    throw Error("kissme_fit: need both similar and dissimilar pairs");
  const Eigen::Index d = similar.front().first.size();
  if (d == 0) throw Error("kissme_fit: zero-dimensional pairs");

  const Eigen::MatrixXd sigma_s = second_moment(similar, d, "similar");
  const Eigen::MatrixXd sigma_d = second_moment(dissimilar, d, "dissimilar");

  const Eigen::MatrixXd raw =
      stable_inverse(sigma_s, "similar") - stable_inverse(sigma_d, "dissimilar");

  MahalanobisMetric metric;
  metric.m_matrix = psd_clip(raw);
  metric.pca = PcaModel::identity(static_cast<std::size_t>(d));
  return metric;
}

double mahalanobis_distance(const MahalanobisMetric& metric, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y) {
  const Eigen::VectorXd z = pca_apply(metric.pca, x) - pca_apply(metric.pca, y);
  const double v = z.dot(metric.m_matrix * z);
  // PSD quadratic form; clamp rounding noise
  return v > 0.0 ? v : 0.0;
}

}  // namespace mer
