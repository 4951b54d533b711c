#include "mer/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mer/kernels.hpp"
#include "mer/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor cache IO assumes a little-endian host");

namespace mer {

double BaseMetric::distance(std::span<const double> x,
                            std::span<const double> y) const {
  std::vector<double> ex(embed_dim()), ey(embed_dim());
  embed(x, ex);
  embed(y, ey);
  return kernels::sqdist(ex.data(), ey.data(), ex.size());
}

DistanceTensor::DistanceTensor(std::vector<std::string> ids,
                               std::vector<std::string> metric_labels)
    : ids_(std::move(ids)), labels_(std::move(metric_labels)) {
  if (ids_.size() < 2) throw Error("distance tensor: need at least 2 ids");
  if (labels_.empty()) throw Error("distance tensor: need at least one metric");
  values_.assign(ids_.size() * ids_.size() * labels_.size(), 0.0);
}

DistanceTensor DistanceTensor::slice(const std::vector<std::string>& subset_ids) const {
  std::vector<std::size_t> idx;
  idx.reserve(subset_ids.size());
  for (const auto& id : subset_ids) {
    const auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end())
      throw Error("tensor slice: id '" + id + "' not present");
    idx.push_back(static_cast<std::size_t>(it - ids_.begin()));
  }
  DistanceTensor out(subset_ids, labels_);
  const std::size_t T = labels_.size();
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      std::memcpy(out.pair(i, j).data(), pair(idx[i], idx[j]).data(),
                  T * sizeof(double));
  return out;
}

DistanceTensor build_distance_tensor(const std::vector<const BaseMetric*>& metrics,
                                     const Dataset& ds,
                                     const std::vector<std::string>& ids,
                                     std::size_t jobs) {
  if (metrics.empty()) throw Error("build_distance_tensor: empty metric list");
  std::vector<std::string> labels;
  for (const auto* m : metrics) labels.push_back(m->label());

  DistanceTensor out(ids, labels);
  const std::size_t m = ids.size();
  const std::size_t T = metrics.size();

  std::vector<std::size_t> rows(m);
  for (std::size_t i = 0; i < m; ++i) rows[i] = ds.index_of(ids[i]);

  for (std::size_t t = 0; t < T; ++t) {
    const BaseMetric& metric = *metrics[t];
    const std::size_t ch = ds.channel_index(metric.channel());

    if (metric.has_embedding()) {
      const std::size_t ed = metric.embed_dim();
      std::vector<double> ea(m * ed), eb(m * ed);
      parallel_for(m, jobs, [&](std::size_t i) {
        metric.embed(ds.vec(View::A, ch, rows[i]), {ea.data() + i * ed, ed});
        metric.embed(ds.vec(View::B, ch, rows[i]), {eb.data() + i * ed, ed});
      });
      parallel_for(m, jobs, [&](std::size_t i) {
        for (std::size_t j = 0; j < m; ++j)
          out.at(i, j, t) =
              kernels::sqdist(ea.data() + i * ed, eb.data() + j * ed, ed);
      });
    } else {
      parallel_for(m, jobs, [&](std::size_t i) {
        for (std::size_t j = 0; j < m; ++j)
          out.at(i, j, t) = metric.distance(ds.vec(View::A, ch, rows[i]),
                                            ds.vec(View::B, ch, rows[j]));
      });
    }

    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double v = out.at(i, j, t);
        if (!std::isfinite(v) || v < 0.0)
          throw Error("invalid distance from metric '" + metric.label() +
                      "' for pair (" + ids[i] + ", " + ids[j] + "): " +
                      format_double(v));
      }
  }
  return out;
}

namespace {

constexpr char kMagic[5] = {'M', 'E', 'R', 'T', '1'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& off, const std::string& what) {
  if (off + sizeof(T) > in.size())
    throw Error("tensor cache: truncated file while reading " + what);
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void write_tensor_cache(const std::filesystem::path& path, const DistanceTensor& t) {
  std::string out;
  out.reserve(64 + t.values().size() * sizeof(double));
  out.append(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, t.size());
  put<std::uint64_t>(out, t.num_metrics());
  for (const auto& label : t.metric_labels()) {
    if (label.size() > 0xffffffffull) throw Error("tensor cache: label too long");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
    out.append(label);
  }
  out.append(reinterpret_cast<const char*>(t.values().data()),
             t.values().size() * sizeof(double));
  atomic_write_file(path, out);
}

DistanceTensor read_tensor_cache(const std::filesystem::path& path,
                                 std::vector<std::string> ids) {
  const std::string in = read_text_file(path);
  std::size_t off = 0;
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error("tensor cache: bad magic in " + path.string());
  off = sizeof(kMagic);
  const auto m = take<std::uint64_t>(in, off, "m");
  const auto T = take<std::uint64_t>(in, off, "T");
  if (m != ids.size())
    throw Error("tensor cache: file holds " + std::to_string(m) + " ids, caller has " +
                std::to_string(ids.size()));
  if (T == 0 || m < 2) throw Error("tensor cache: degenerate dimensions");
  if (m > (1u << 20) || T > (1u << 20)) throw Error("tensor cache: implausible sizes");
  std::vector<std::string> labels;
  labels.reserve(T);
  for (std::uint64_t t = 0; t < T; ++t) {
    const auto len = take<std::uint32_t>(in, off, "label length");
    if (off + len > in.size()) throw Error("tensor cache: truncated label");
    labels.emplace_back(in.data() + off, len);
    off += len;
  }
  DistanceTensor out(std::move(ids), std::move(labels));
  const std::size_t need = m * m * T * sizeof(double);
  if (in.size() - off != need)
    throw Error("tensor cache: payload size mismatch in " + path.string());
  std::memcpy(out.values().data(), in.data() + off, need);
  for (double v : out.values())
    if (!std::isfinite(v) || v < 0.0)
      throw Error("tensor cache: invalid distance value in " + path.string());
  return out;
}

}  // namespace mer
