#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mer {

enum class View { A, B };

struct ChannelSchema {
  std::string name;
  std::size_t dim;
};

// one individual seen in one view, with a vector per feature channel
struct FeatureSample {
  std::string individual_id;
  View view;
  std::vector<std::pair<std::string, std::vector<double>>> channels;
};

// a paired two-view dataset: every individual has exactly one sample per
// view and every sample carries the same channels in the same order.
class Dataset {
 public:
  static Dataset from_samples(std::vector<FeatureSample> samples);

  std::size_t num_individuals() const { return ids_.size(); }
  std::size_t num_channels() const { return channels_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<ChannelSchema>& channels() const { return channels_; }
  std::size_t channel_index(const std::string& name) const;
  std::size_t index_of(const std::string& id) const;

  std::span<const double> vec(View v, std::size_t channel, std::size_t index) const;
  std::span<const double> vec(View v, std::size_t channel, const std::string& id) const;

  std::uint64_t content_hash() const;

 private:
  std::vector<std::string> ids_;  // sorted
  std::vector<ChannelSchema> channels_;
  // per channel, num_individuals x dim row-major, rows ordered like ids_
  std::vector<std::vector<double>> a_;
  std::vector<std::vector<double>> b_;
};

// Row format: id,view,channel,v1,...,vD with view in {A,B}. Blank lines and
// lines starting with '#' are ignored. Later files append samples; the same
// (id, view, channel) appearing twice anywhere is an error.
Dataset load_dataset(const std::vector<std::filesystem::path>& files);
void save_dataset(const Dataset& ds, const std::filesystem::path& file);

struct Split {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed;  // substream seed this split was drawn with
  std::size_t index;
};

// train/test counts of 0 select the default halving (floor(m/2) train,
// the rest test)
struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

std::vector<Split> generate_splits(const Dataset& ds, std::size_t num_splits,
                                   std::uint64_t seed, const SplitSpec& spec = {});

}  // namespace mer
