#include <filesystem>

#include "doctest.h"
#include "mer/metric_bank.hpp"
#include "mer/tensor.hpp"
#include "mer/util.hpp"

using namespace mer;

namespace {

Dataset line_dataset() {
  // 1-D channel: A and B views both at 0 for p, both at 1 for q
  std::vector<FeatureSample> s;
  for (const auto& [id, x] : {std::pair{"p", 0.0}, {"q", 1.0}}) {
    for (const View v : {View::A, View::B}) {
      FeatureSample f;
      f.individual_id = id;
      f.view = v;
      f.channels = {{"c0", {x}}};
      s.push_back(std::move(f));
    }
  }
  return Dataset::from_samples(std::move(s));
}

Dataset grid_dataset(std::size_t m) {
  std::vector<FeatureSample> s;
  for (std::size_t i = 0; i < m; ++i) {
    for (const View v : {View::A, View::B}) {
      FeatureSample f;
      f.individual_id = "p" + std::to_string(i);
      f.view = v;
      const double x = static_cast<double>(i) + (v == View::B ? 0.1 : 0.0);
      f.channels = {{"c0", {x, 2 * x}}, {"c1", {x * x, x + 1, 3.0}}};
      s.push_back(std::move(f));
    }
  }
  return Dataset::from_samples(std::move(s));
}

// distance-only metric (no embedding fast path)
class RawMetric : public BaseMetric {
 public:
  RawMetric(std::string label, std::string channel, double offset = 0.0)
      : label_(std::move(label)), channel_(std::move(channel)), offset_(offset) {}
  const std::string& label() const override { return label_; }
  const std::string& channel() const override { return channel_; }
  bool has_embedding() const override { return false; }
  std::size_t embed_dim() const override { return 0; }
  void embed(std::span<const double>, std::span<double>) const override {}
  double distance(std::span<const double> x, std::span<const double> y) const override {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s + offset_;
  }

 private:
  std::string label_, channel_;
  double offset_;
};

}  // namespace

TEST_CASE("two ids, one squared euclidean metric") {
  const Dataset ds = line_dataset();
  const EuclidMetric m("c0/euclid", "c0", 1);
  const DistanceTensor t = build_distance_tensor({&m}, ds, ds.ids());
  CHECK(t.size() == 2);
  CHECK(t.num_metrics() == 1);
  CHECK(t.at(0, 0, 0) == 0.0);
  CHECK(t.at(0, 1, 0) == 1.0);
  CHECK(t.at(1, 0, 0) == 1.0);
  CHECK(t.at(1, 1, 0) == 0.0);
}

TEST_CASE("tensor shape is m x m x T") {
  const Dataset ds = grid_dataset(5);
  const EuclidMetric m0("a", "c0", 2), m1("b", "c1", 3);
  const RawMetric m2("c", "c0");
  const DistanceTensor t = build_distance_tensor({&m0, &m1, &m2}, ds, ds.ids());
  CHECK(t.size() == 5);
  CHECK(t.num_metrics() == 3);
  CHECK(t.values().size() == 5 * 5 * 3);
  CHECK(t.pair(2, 3).size() == 3);
  // embedding and raw routes agree for the same metric
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(t.at(i, j, 0) == doctest::Approx(t.at(i, j, 2)).epsilon(1e-12));
}

TEST_CASE("parallel build matches serial build") {
  const Dataset ds = grid_dataset(9);
  const EuclidMetric m0("a", "c0", 2), m1("b", "c1", 3);
  const DistanceTensor t1 = build_distance_tensor({&m0, &m1}, ds, ds.ids(), 1);
  const DistanceTensor t4 = build_distance_tensor({&m0, &m1}, ds, ds.ids(), 4);
  CHECK(t1.values() == t4.values());
}

TEST_CASE("negative metric value is rejected with the label") {
  const Dataset ds = line_dataset();
  const RawMetric bad("badmetric", "c0", -5.0);
  try {
    build_distance_tensor({&bad}, ds, ds.ids());
    FAIL("expected error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("invalid distance") != std::string::npos);
    CHECK(msg.find("badmetric") != std::string::npos);
  }
}

TEST_CASE("cache round-trips exactly") {
  const Dataset ds = grid_dataset(4);
  const EuclidMetric m0("a", "c0", 2), m1("b", "c1", 3);
  const DistanceTensor t = build_distance_tensor({&m0, &m1}, ds, ds.ids());
  const auto p = std::filesystem::temp_directory_path() / "mer_tensor_rt.bin";
  write_tensor_cache(p, t);
  const DistanceTensor back = read_tensor_cache(p, t.ids());
  CHECK(back.values() == t.values());
  CHECK(back.metric_labels() == t.metric_labels());
  CHECK(back.ids() == t.ids());
  CHECK_THROWS_AS(read_tensor_cache(p, {"p0", "p1"}), Error);  // wrong id count
  std::filesystem::remove(p);
}

TEST_CASE("cache rejects corrupted payloads") {
  const Dataset ds = line_dataset();
  const EuclidMetric m0("a", "c0", 1);
  const DistanceTensor t = build_distance_tensor({&m0}, ds, ds.ids());
  const auto p = std::filesystem::temp_directory_path() / "mer_tensor_bad.bin";
  write_tensor_cache(p, t);
  auto bytes = read_text_file(p);
  bytes.resize(bytes.size() - 3);
  atomic_write_file(p, bytes);
  CHECK_THROWS_AS(read_tensor_cache(p, t.ids()), Error);
  atomic_write_file(p, "XXXXX" + bytes.substr(5));
  CHECK_THROWS_AS(read_tensor_cache(p, t.ids()), Error);
  std::filesystem::remove(p);
}

TEST_CASE("slice keeps the selected block") {
  const Dataset ds = grid_dataset(5);
  const EuclidMetric m0("a", "c0", 2), m1("b", "c1", 3);
  const DistanceTensor t = build_distance_tensor({&m0, &m1}, ds, ds.ids());
  const std::vector<std::string> sub{"p1", "p3", "p4"};
  const DistanceTensor s = t.slice(sub);
  CHECK(s.ids() == sub);
  CHECK(s.metric_labels() == t.metric_labels());
  const std::size_t src[] = {1, 3, 4};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 2; ++k)
        CHECK(s.at(i, j, k) == t.at(src[i], src[j], k));
  CHECK_THROWS_AS(t.slice({"p1", "nope"}), Error);
}
