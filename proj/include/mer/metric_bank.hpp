#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mer/base_metric.hpp"
#include "mer/dataset.hpp"
#include "mer/kissme.hpp"
#include "mer/klfda.hpp"

namespace mer {

enum class LearnerKind { euclid, kissme, klfda };

// parsed form of a bank entry label:
//   <channel>/euclid
//   <channel>/kissme/pca<d>
//   <channel>/klfda/<gauss|chi2>-q<quantile>[-r<dim>]
struct MetricSpec {
  std::string channel;
  LearnerKind learner = LearnerKind::euclid;
  std::size_t pca_dim = 0;    // kissme
  KernelKind kernel = KernelKind::gauss_rbf;  // klfda
  double quantile = 0.0;      // klfda
  std::size_t r = 0;          // klfda, 0 = auto
  std::string label;          // canonical form
};

MetricSpec parse_metric_spec(const std::string& text);

class EuclidMetric : public BaseMetric {
 public:
  EuclidMetric(std::string label, std::string channel, std::size_t dim);
  const std::string& label() const override { return label_; }
  const std::string& channel() const override { return channel_; }
  std::size_t embed_dim() const override { return dim_; }
  void embed(std::span<const double> x, std::span<double> out) const override;

 private:
  std::string label_;
  std::string channel_;
  std::size_t dim_;
};

class KissmeMetric : public BaseMetric {
 public:
  KissmeMetric(std::string label, MahalanobisMetric metric);
  const std::string& label() const override { return label_; }
  const std::string& channel() const override { return metric_.channel_name; }
  std::size_t embed_dim() const override;
  void embed(std::span<const double> x, std::span<double> out) const override;
  const MahalanobisMetric& metric() const { return metric_; }

 private:
  std::string label_;
  MahalanobisMetric metric_;
  // sqrt(Lambda) V^T basis^T folded into one matrix: embed(x) = T (x - mean)
  Eigen::MatrixXd transform_;
};

class KlfdaMetric : public BaseMetric {
 public:
  KlfdaMetric(std::string label, std::string channel, KlfdaModel model);
  const std::string& label() const override { return label_; }
  const std::string& channel() const override { return channel_; }
  std::size_t embed_dim() const override;
  void embed(std::span<const double> x, std::span<double> out) const override;
  const KlfdaModel& model() const { return model_; }

 private:
  std::string label_;
  std::string channel_;
  KlfdaModel model_;
};

struct MetricBank {
  std::vector<std::unique_ptr<BaseMetric>> metrics;

  std::vector<std::string> labels() const;
  std::vector<const BaseMetric*> pointers() const;
};

// fits every entry on the train split of the dataset; `seed` drives the
// deterministic pair subsampling of the kernel bandwidth heuristic
MetricBank build_metric_bank(const Dataset& ds,
                             const std::vector<std::string>& train_ids,
                             const std::vector<MetricSpec>& specs,
                             std::uint64_t seed, std::size_t jobs = 1);

void save_metric_bank(const MetricBank& bank, const std::filesystem::path& dir);
MetricBank load_metric_bank(const std::filesystem::path& dir);

}  // namespace mer
