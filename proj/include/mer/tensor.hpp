#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mer/base_metric.hpp"
#include "mer/dataset.hpp"

namespace mer {

// Distances for every (probe, gallery, metric) triple of one id set.
// values are row-major (i, j, t); entry (i, i, t) is the matched pair.
class DistanceTensor {
 public:
  DistanceTensor(std::vector<std::string> ids, std::vector<std::string> metric_labels);

  std::size_t size() const { return ids_.size(); }          // m
  std::size_t num_metrics() const { return labels_.size(); }  // T

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::string>& metric_labels() const { return labels_; }

  double at(std::size_t i, std::size_t j, std::size_t t) const {
    return values_[(i * ids_.size() + j) * labels_.size() + t];
  }
  double& at(std::size_t i, std::size_t j, std::size_t t) {
    return values_[(i * ids_.size() + j) * labels_.size() + t];
  }
  // the T distances of one (probe, gallery) pair, contiguous
  std::span<const double> pair(std::size_t i, std::size_t j) const {
    return {values_.data() + (i * ids_.size() + j) * labels_.size(), labels_.size()};
  }
  std::span<double> pair(std::size_t i, std::size_t j) {
    return {values_.data() + (i * ids_.size() + j) * labels_.size(), labels_.size()};
  }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // sub-tensor over a subset of this tensor's ids (by id string)
  DistanceTensor slice(const std::vector<std::string>& subset_ids) const;

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
  std::vector<double> values_;
};

DistanceTensor build_distance_tensor(
    const std::vector<const BaseMetric*>& metrics, const Dataset& ds,
    const std::vector<std::string>& ids, std::size_t jobs = 1);

// binary cache: magic "MERT1", u64 m, u64 T, T x (u32 label length + bytes),
// then m*m*T little-endian doubles in (i, j, t) row-major order. Ids are not
// stored; the reader re-attaches the id list it is called with.
void write_tensor_cache(const std::filesystem::path& path, const DistanceTensor& t);
DistanceTensor read_tensor_cache(const std::filesystem::path& path,
                                 std::vector<std::string> ids);

}  // namespace mer
