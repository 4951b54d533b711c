#include "mer/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "mer/util.hpp"

namespace mer {

namespace {

const char* view_name(View v) { return v == View::A ? "A" : "B"; }

}  // namespace

Dataset Dataset::from_samples(std::vector<FeatureSample> samples) {
  if (samples.empty()) throw Error("dataset: no samples");

  // schema from the first sample; everything else must match it
  std::vector<ChannelSchema> schema;
  for (const auto& [name, values] : samples.front().channels) {
    if (values.empty()) throw Error("dataset: channel '" + name + "' has no values");
    for (const auto& prior : schema)
      if (prior.name == name)
        throw Error("dataset: duplicate channel '" + name + "' within one sample");
    schema.push_back({name, values.size()});
  }
  if (schema.empty()) throw Error("dataset: samples carry no channels");

  std::map<std::string, std::array<const FeatureSample*, 2>> by_id;
  for (const auto& s : samples) {
    if (s.individual_id.empty()) throw Error("dataset: empty individual id");
    if (s.channels.size() != schema.size())
      throw Error("dataset: sample " + s.individual_id + "/" + view_name(s.view) +
                  " carries " + std::to_string(s.channels.size()) +
                  " channels, expected " + std::to_string(schema.size()));
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (s.channels[c].first != schema[c].name)
        throw Error("dataset: sample " + s.individual_id + "/" + view_name(s.view) +
                    " channel order mismatch: got '" + s.channels[c].first +
                    "', expected '" + schema[c].name + "'");
      if (s.channels[c].second.size() != schema[c].dim)
        throw Error("dataset: channel '" + schema[c].name + "' has dimension " +
                    std::to_string(s.channels[c].second.size()) + " for " +
                    s.individual_id + "/" + view_name(s.view) + " but " +
                    std::to_string(schema[c].dim) + " elsewhere");
      for (double v : s.channels[c].second)
        if (!std::isfinite(v))
          throw Error("dataset: non-finite value in channel '" + schema[c].name +
                      "' for " + s.individual_id + "/" + view_name(s.view));
    }
    auto& slot = by_id[s.individual_id];
    const std::size_t vi = s.view == View::A ? 0 : 1;
    if (slot[vi] != nullptr)
      throw Error("dataset: duplicate sample for " + s.individual_id + "/" +
                  view_name(s.view));
    slot[vi] = &s;
  }

  for (const auto& [id, slot] : by_id) {
    if (slot[0] == nullptr)
      throw Error("dataset: individual '" + id + "' is missing view A");
    if (slot[1] == nullptr)
      throw Error("dataset: individual '" + id + "' is missing view B");
  }
  if (by_id.size() < 2)
    throw Error("dataset: need at least 2 individuals, got " +
                std::to_string(by_id.size()));

  Dataset ds;
  ds.channels_ = std::move(schema);
  for (const auto& [id, slot] : by_id) ds.ids_.push_back(id);  // map is sorted
  const std::size_t m = ds.ids_.size();
  ds.a_.resize(ds.channels_.size());
  ds.b_.resize(ds.channels_.size());
  for (std::size_t c = 0; c < ds.channels_.size(); ++c) {
    ds.a_[c].resize(m * ds.channels_[c].dim);
    ds.b_[c].resize(m * ds.channels_[c].dim);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto& slot = by_id.at(ds.ids_[i]);
    for (std::size_t c = 0; c < ds.channels_.size(); ++c) {
      const std::size_t dim = ds.channels_[c].dim;
      std::copy(slot[0]->channels[c].second.begin(), slot[0]->channels[c].second.end(),
                ds.a_[c].begin() + static_cast<std::ptrdiff_t>(i * dim));
      std::copy(slot[1]->channels[c].second.begin(), slot[1]->channels[c].second.end(),
                ds.b_[c].begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
  }
  return ds;
}

std::size_t Dataset::channel_index(const std::string& name) const {
  for (std::size_t c = 0; c < channels_.size(); ++c)
    if (channels_[c].name == name) return c;
  throw Error("dataset: unknown channel '" + name + "'");
}

std::size_t Dataset::index_of(const std::string& id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) throw Error("dataset: unknown id '" + id + "'");
  return static_cast<std::size_t>(it - ids_.begin());
}

std::span<const double> Dataset::vec(View v, std::size_t channel,
                                     std::size_t index) const {
  const std::size_t dim = channels_.at(channel).dim;
  const auto& store = v == View::A ? a_ : b_;
  return {store[channel].data() + index * dim, dim};
}

std::span<const double> Dataset::vec(View v, std::size_t channel,
                                     const std::string& id) const {
  return vec(v, channel, index_of(id));
}

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& id : ids_) h = fnv1a(id + "\n", h);
  for (const auto& ch : channels_) {
    h = fnv1a(ch.name + "\n", h);
    h = fnv1a(&ch.dim, sizeof(ch.dim), h);
  }
  for (const auto& store : {&a_, &b_})
    for (const auto& chan : *store)
      h = fnv1a(chan.data(), chan.size() * sizeof(double), h);
  return h;
}

Dataset load_dataset(const std::vector<std::filesystem::path>& files) {
  if (files.empty()) throw Error("load_dataset: no input files");
  std::vector<FeatureSample> samples;
  // (id, view) -> index into samples; channels accumulate row by row
  std::map<std::pair<std::string, int>, std::size_t> index;

  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open feature file: " + file.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const std::string ctx = file.string() + ":" + std::to_string(lineno);
      const std::vector<std::string> fields = split(t, ',');
      if (fields.size() < 4)
        throw Error(ctx + ": expected id,view,channel,v1,... got " +
                    std::to_string(fields.size()) + " fields");
      const std::string id = trim(fields[0]);
      const std::string view_s = trim(fields[1]);
      const std::string channel = trim(fields[2]);
      if (id.empty()) throw Error(ctx + ": empty id");
      if (channel.empty()) throw Error(ctx + ": empty channel name");
      View view;
      if (view_s == "A")
        view = View::A;
      else if (view_s == "B")
        view = View::B;
      else
        throw Error(ctx + ": view must be A or B, got '" + view_s + "'");
      std::vector<double> values;
      values.reserve(fields.size() - 3);
      for (std::size_t f = 3; f < fields.size(); ++f)
        values.push_back(parse_double(fields[f], ctx));

      const auto key = std::make_pair(id, view == View::A ? 0 : 1);
      auto it = index.find(key);
      if (it == index.end()) {
        samples.push_back({id, view, {}});
        it = index.emplace(key, samples.size() - 1).first;
      }
      auto& sample = samples[it->second];
      for (const auto& [cname, _] : sample.channels)
        if (cname == channel)
          throw Error(ctx + ": duplicate channel '" + channel + "' for " + id + "/" +
                      view_s);
      sample.channels.emplace_back(channel, std::move(values));
    }
  }
  return Dataset::from_samples(std::move(samples));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& file) {
  std::string out;
  for (std::size_t i = 0; i < ds.num_individuals(); ++i) {
    for (View v : {View::A, View::B}) {
      for (std::size_t c = 0; c < ds.num_channels(); ++c) {
        out += ds.ids()[i];
        out += ',';
        out += view_name(v);
        out += ',';
        out += ds.channels()[c].name;
        for (double x : ds.vec(v, c, i)) {
          out += ',';
          out += format_double(x);
        }
        out += '\n';
      }
    }
  }
  atomic_write_file(file, out);
}

std::vector<Split> generate_splits(const Dataset& ds, std::size_t num_splits,
                                   std::uint64_t seed, const SplitSpec& spec) {
  const std::size_t m = ds.num_individuals();
  if (num_splits == 0) throw Error("generate_splits: need at least one split");
  std::size_t train = spec.train_count == 0 ? m / 2 : spec.train_count;
  std::size_t test = spec.test_count == 0 ? m - train : spec.test_count;
  if (train == 0 || test == 0)
    throw Error("generate_splits: train and test partitions must be nonempty");
  if (train + test > m)
    throw Error("generate_splits: train(" + std::to_string(train) + ") + test(" +
                std::to_string(test) + ") exceeds population " + std::to_string(m));
  if (test < 2)
    throw Error("generate_splits: test partition must hold at least 2 individuals");

  std::vector<Split> splits;
  splits.reserve(num_splits);
  for (std::size_t s = 0; s < num_splits; ++s) {
    const std::uint64_t split_seed = substream_seed(seed, s);
    std::mt19937_64 rng(split_seed);
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    deterministic_shuffle(order, rng);
    Split sp;
    sp.seed = split_seed;
    sp.index = s;
    for (std::size_t i = 0; i < train; ++i) sp.train_ids.push_back(ds.ids()[order[i]]);
    for (std::size_t i = 0; i < test; ++i)
      sp.test_ids.push_back(ds.ids()[order[train + i]]);
    std::sort(sp.train_ids.begin(), sp.train_ids.end());
    std::sort(sp.test_ids.begin(), sp.test_ids.end());
    splits.push_back(std::move(sp));
  }
  return splits;
}

}  // namespace mer
