#include "mer/klfda.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mer/kernels.hpp"
#include "mer/util.hpp"

namespace mer {

namespace {

std::span<const double> row_span(const Eigen::MatrixXd& X, Eigen::Index i,
                                 std::vector<double>& buf) {
  // Eigen defaults to column-major storage; copy one row out contiguously
  const auto D = static_cast<std::size_t>(X.cols());
  buf.resize(D);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    buf[static_cast<std::size_t>(j)] = X(i, j);
  return {buf.data(), D};
}

}  // namespace

KlfdaModel klfda_fit(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                     const KlfdaConfig& cfg) {
  const Eigen::Index n = X.rows();
  if (n < 4) throw Error("klfda_fit: need at least 4 samples");
  if (labels.size() != static_cast<std::size_t>(n))
    throw Error("klfda_fit: label count does not match sample count");
  if (!(cfg.beta > 0.0)) throw Error("klfda_fit: beta must be positive");
  if (!(cfg.kernel.sigma2 > 0.0)) throw Error("klfda_fit: sigma2 must be positive");
  if (cfg.local_scaling_knn == 0) throw Error("klfda_fit: local scaling knn must be >= 1");

  std::map<int, std::vector<Eigen::Index>> classes;
  for (Eigen::Index i = 0; i < n; ++i) classes[labels[i]].push_back(i);
  if (classes.size() < 2) throw Error("klfda_fit: need at least 2 classes");
  for (const auto& [c, members] : classes)
    if (members.size() < 2)
      throw Error("klfda_fit: class " + std::to_string(c) +
                  " has fewer than 2 members");

  if (cfg.kernel.kind == KernelKind::chi2_rbf && X.minCoeff() < 0.0)
    throw Error("klfda_fit: chi2 kernel requires nonnegative features");

  // pairwise base distances, reused for the affinity and the kernel matrix
  Eigen::MatrixXd base(n, n);
  {
    std::vector<double> bi, bj;
    for (Eigen::Index i = 0; i < n; ++i) {
      base(i, i) = 0.0;
      const auto ri = row_span(X, i, bi);
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = kernel_base_distance(cfg.kernel, ri, row_span(X, j, bj));
        base(i, j) = d;
        base(j, i) = d;
      }
    }
  }

  // local-scaling affinity within each class: sigma_i is the base distance to
  // the knn-th within-class neighbour (knn clamped to the class size - 1)
  Eigen::MatrixXd affinity = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [c, members] : classes) {
    const std::size_t nc = members.size();
    const std::size_t knn = std::min(cfg.local_scaling_knn, nc - 1);
    std::vector<double> sigma(nc);
    for (std::size_t a = 0; a < nc; ++a) {
      std::vector<double> d;
      d.reserve(nc - 1);
      for (std::size_t b = 0; b < nc; ++b)
        if (b != a) d.push_back(base(members[a], members[b]));
      std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(knn - 1),
                       d.end());
      sigma[a] = std::sqrt(d[knn - 1]);
    }
    for (std::size_t a = 0; a < nc; ++a) {
      affinity(members[a], members[a]) = 1.0;
      for (std::size_t b = a + 1; b < nc; ++b) {
        const double ss = sigma[a] * sigma[b];
        const double v = ss > 0.0 ? std::exp(-base(members[a], members[b]) / ss) : 1.0;
        affinity(members[a], members[b]) = v;
        affinity(members[b], members[a]) = v;
      }
    }
  }

  // local Fisher weight matrices and their graph Laplacians
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd Wb = Eigen::MatrixXd::Constant(n, n, inv_n);
  Eigen::MatrixXd Ww = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [c, members] : classes) {
    const double inv_nc = 1.0 / static_cast<double>(members.size());
    for (const Eigen::Index i : members)
      for (const Eigen::Index j : members) {
        Wb(i, j) = affinity(i, j) * (inv_n - inv_nc);
        Ww(i, j) = affinity(i, j) * inv_nc;
      }
  }
  const auto laplacian = [](const Eigen::MatrixXd& W) {
    Eigen::MatrixXd L = -W;
    L.diagonal() += W.rowwise().sum();
    return L;
  };
  const Eigen::MatrixXd Lb = laplacian(Wb);
  const Eigen::MatrixXd Lw = laplacian(Ww);

  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = std::exp(-base(i, j) / cfg.kernel.sigma2);
      K(i, j) = v;
      K(j, i) = v;
    }

  Eigen::MatrixXd Sb = K * Lb * K;
  Eigen::MatrixXd Sw = K * Lw * K;
  Sb = 0.5 * (Sb + Sb.transpose()).eval();
  Sw = 0.5 * (Sw + Sw.transpose()).eval();
  const Eigen::MatrixXd B =
      Sw + cfg.beta * Eigen::MatrixXd::Identity(n, n);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(Sb, B);
  if (eig.info() != Eigen::Success)
    throw Error("klfda_fit: generalized eigensolver failed");

  const std::size_t r_max = static_cast<std::size_t>(n);
  std::size_t r = cfg.r == 0 ? std::min(classes.size() - 1, r_max) : cfg.r;
  if (r == 0 || r > r_max)
    throw Error("klfda_fit: embedding dimension r=" + std::to_string(cfg.r) +
                " outside [1, " + std::to_string(r_max) + "]");

  KlfdaModel model;
  model.train_points = X;
  model.kernel = cfg.kernel;
  model.beta = cfg.beta;
  model.coeffs.resize(n, static_cast<Eigen::Index>(r));
  model.eigenvalues.resize(static_cast<Eigen::Index>(r));
  for (std::size_t k = 0; k < r; ++k) {
    const Eigen::Index src = n - 1 - static_cast<Eigen::Index>(k);
    Eigen::VectorXd a = eig.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    a.cwiseAbs().maxCoeff(&pivot);
    if (a(pivot) < 0.0) a = -a;
    const double lambda = eig.eigenvalues()(src);
    const double residual = (Sb * a - lambda * (B * a)).norm() / a.norm();
    model.max_eigen_residual = std::max(model.max_eigen_residual, residual);
    model.coeffs.col(static_cast<Eigen::Index>(k)) = a;
    model.eigenvalues(static_cast<Eigen::Index>(k)) = lambda;
  }
  if (model.max_eigen_residual > 1e-6)
    throw Error("klfda_fit: eigen residual " +
                format_double(model.max_eigen_residual) + " exceeds tolerance 1e-6");
  return model;
}

Eigen::VectorXd klfda_embed(const KlfdaModel& model, std::span<const double> x) {
  const Eigen::Index n = model.train_points.rows();
  if (static_cast<Eigen::Index>(x.size()) != model.train_points.cols())
    throw Error("klfda_embed: vector has dimension " + std::to_string(x.size()) +
                ", model expects " + std::to_string(model.train_points.cols()));
  if (model.kernel.kind == KernelKind::chi2_rbf)
    for (double v : x)
      if (v < 0.0) throw Error("klfda_embed: chi2 kernel requires nonnegative entries");
  Eigen::VectorXd k(n);
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ri = row_span(model.train_points, i, buf);
    k(i) = std::exp(-kernel_base_distance(model.kernel, ri, x) / model.kernel.sigma2);
  }
  return model.coeffs.transpose() * k;
}

double klfda_distance(const KlfdaModel& model, std::span<const double> x,
                      std::span<const double> y) {
  const Eigen::VectorXd ex = klfda_embed(model, x);
  const Eigen::VectorXd ey = klfda_embed(model, y);
  return kernels::sqdist(ex.data(), ey.data(), static_cast<std::size_t>(ex.size()));
}

}  // namespace mer
