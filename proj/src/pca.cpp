#include "mer/pca.hpp"

#include <cmath>

#include "mer/util.hpp"

namespace mer {

PcaModel PcaModel::identity(std::size_t dim) {
  PcaModel m;
  m.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  m.basis = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                      static_cast<Eigen::Index>(dim));
  m.variances = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim));
  return m;
}

PcaModel pca_fit(const Eigen::MatrixXd& rows, std::size_t d) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index D = rows.cols();
  if (n < 2) throw Error("pca_fit: need at least 2 samples");
  if (d == 0) throw Error("pca_fit: need d >= 1");
  const auto limit = static_cast<std::size_t>(std::min<Eigen::Index>(D, n - 1));
  if (d > limit)
    throw Error("pca_fit: d=" + std::to_string(d) + " exceeds min(D, n-1)=" +
                std::to_string(limit));

  PcaModel model;
  model.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");

  // eigenvalues come out ascending; take the top d in descending order
  model.basis.resize(D, static_cast<Eigen::Index>(d));
  model.variances.resize(static_cast<Eigen::Index>(d));
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const Eigen::Index src = D - 1 - static_cast<Eigen::Index>(k);
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    // deterministic sign: largest-magnitude entry made positive
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    model.basis.col(static_cast<Eigen::Index>(k)) = v;
    const double lambda = eig.eigenvalues()(src);
    model.variances(static_cast<Eigen::Index>(k)) = lambda;
    if (lambda <= 1e-12 * std::max(top, 1e-300)) model.degenerate = true;
  }
  return model;
}

Eigen::VectorXd pca_apply(const PcaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.mean.size())
    throw Error("pca_apply: vector has dimension " + std::to_string(x.size()) +
                ", model expects " + std::to_string(model.mean.size()));
  return model.basis.transpose() * (x - model.mean);
}

}  // namespace mer
