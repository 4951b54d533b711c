#include "mer/metric_bank.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <random>
#include <set>

#include "mer/kernels.hpp"
#include "mer/pca.hpp"
#include "mer/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "metric bank IO assumes a little-endian host");

namespace mer {

MetricSpec parse_metric_spec(const std::string& text) {
  const auto bad = [&](const std::string& why) {
    return Error("bank entry '" + text + "': " + why);
  };
  const std::vector<std::string> parts = split(trim(text), '/');
  if (parts.size() < 2 || parts.size() > 3)
    throw bad("expected <channel>/<learner>[/<params>]");
  MetricSpec spec;
  spec.channel = trim(parts[0]);
  if (spec.channel.empty()) throw bad("empty channel name");
  const std::string learner = trim(parts[1]);

  if (learner == "euclid") {
    if (parts.size() != 2) throw bad("euclid takes no parameters");
    spec.learner = LearnerKind::euclid;
    spec.label = spec.channel + "/euclid";
    return spec;
  }
  if (learner == "kissme") {
    if (parts.size() != 3) throw bad("kissme needs /pca<d>");
    spec.learner = LearnerKind::kissme;
    const std::string p = trim(parts[2]);
    if (p.rfind("pca", 0) != 0) throw bad("kissme parameter must look like pca<d>");
    spec.pca_dim = static_cast<std::size_t>(
        parse_u64(p.substr(3), "bank entry '" + text + "' pca dimension"));
    if (spec.pca_dim == 0) throw bad("pca dimension must be positive");
    spec.label = spec.channel + "/kissme/pca" + std::to_string(spec.pca_dim);
    return spec;
  }
  if (learner == "klfda") {
    if (parts.size() != 3) throw bad("klfda needs /<kernel>-q<quantile>[-r<dim>]");
    spec.learner = LearnerKind::klfda;
    const std::vector<std::string> toks = split(trim(parts[2]), '-');
    if (toks.size() < 2 || toks.size() > 3)
      throw bad("klfda parameters must look like <kernel>-q<quantile>[-r<dim>]");
    spec.kernel = kernel_kind_from_name(trim(toks[0]));
    const std::string q = trim(toks[1]);
    if (q.size() < 2 || q[0] != 'q') throw bad("missing q<quantile> token");
    spec.quantile = parse_double(q.substr(1), "bank entry '" + text + "' quantile");
    if (spec.quantile < 0.0 || spec.quantile > 1.0)
      throw bad("quantile must lie in [0,1]");
    if (toks.size() == 3) {
      const std::string r = trim(toks[2]);
      if (r.size() < 2 || r[0] != 'r') throw bad("bad r<dim> token");
      spec.r = static_cast<std::size_t>(
          parse_u64(r.substr(1), "bank entry '" + text + "' embedding dimension"));
      if (spec.r == 0) throw bad("embedding dimension must be positive");
    }
    spec.label = spec.channel + "/klfda/" + kernel_kind_name(spec.kernel) + "-q" +
                 format_double(spec.quantile) +
                 (spec.r > 0 ? "-r" + std::to_string(spec.r) : "");
    return spec;
  }
  throw bad("unknown learner '" + learner + "' (expected euclid, kissme or klfda)");
}

// --- concrete metrics --------------------------------------------------------

EuclidMetric::EuclidMetric(std::string label, std::string channel, std::size_t dim)
    : label_(std::move(label)), channel_(std::move(channel)), dim_(dim) {}

void EuclidMetric::embed(std::span<const double> x, std::span<double> out) const {
  if (x.size() != dim_ || out.size() != dim_)
    throw Error(label_ + ": embed dimension mismatch");
  std::copy(x.begin(), x.end(), out.begin());
}

KissmeMetric::KissmeMetric(std::string label, MahalanobisMetric metric)
    : label_(std::move(label)), metric_(std::move(metric)) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(metric_.m_matrix);
  if (eig.info() != Eigen::Success)
    throw Error(label_ + ": eigendecomposition of M failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  transform_ = root.asDiagonal() * eig.eigenvectors().transpose() *
               metric_.pca.basis.transpose();
}

std::size_t KissmeMetric::embed_dim() const {
  return static_cast<std::size_t>(transform_.rows());
}

void KissmeMetric::embed(std::span<const double> x, std::span<double> out) const {
  if (static_cast<Eigen::Index>(x.size()) != transform_.cols() ||
      out.size() != embed_dim())
    throw Error(label_ + ": embed dimension mismatch");
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::Map<Eigen::VectorXd> ov(out.data(), static_cast<Eigen::Index>(out.size()));
  ov = transform_ * (xv - metric_.pca.mean);
}

KlfdaMetric::KlfdaMetric(std::string label, std::string channel, KlfdaModel model)
    : label_(std::move(label)), channel_(std::move(channel)), model_(std::move(model)) {}

std::size_t KlfdaMetric::embed_dim() const {
  return static_cast<std::size_t>(model_.coeffs.cols());
}

void KlfdaMetric::embed(std::span<const double> x, std::span<double> out) const {
  const Eigen::VectorXd e = klfda_embed(model_, x);
  if (out.size() != static_cast<std::size_t>(e.size()))
    throw Error(label_ + ": embed dimension mismatch");
  Eigen::Map<Eigen::VectorXd>(out.data(), e.size()) = e;
}

// --- bank construction --------------------------------------------------------

std::vector<std::string> MetricBank::labels() const {
  std::vector<std::string> out;
  out.reserve(metrics.size());
  for (const auto& m : metrics) out.push_back(m->label());
  return out;
}

std::vector<const BaseMetric*> MetricBank::pointers() const {
  std::vector<const BaseMetric*> out;
  out.reserve(metrics.size());
  for (const auto& m : metrics) out.push_back(m.get());
  return out;
}

namespace {

Eigen::MatrixXd train_rows(const Dataset& ds, const std::vector<std::string>& ids,
                           std::size_t channel) {
  const std::size_t dim = ds.channels()[channel].dim;
  Eigen::MatrixXd X(2 * static_cast<Eigen::Index>(ids.size()),
                    static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t row = ds.index_of(ids[i]);
    const auto a = ds.vec(View::A, channel, row);
    const auto b = ds.vec(View::B, channel, row);
    for (std::size_t d = 0; d < dim; ++d) {
      X(2 * static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = a[d];
      X(2 * static_cast<Eigen::Index>(i) + 1, static_cast<Eigen::Index>(d)) = b[d];
    }
  }
  return X;
}

std::unique_ptr<BaseMetric> fit_kissme(const Dataset& ds,
                                       const std::vector<std::string>& ids,
                                       const MetricSpec& spec) {
  const std::size_t ch = ds.channel_index(spec.channel);
  const Eigen::MatrixXd X = train_rows(ds, ids, ch);
  const PcaModel pca = pca_fit(X, spec.pca_dim);

  const std::size_t n = ids.size();
  std::vector<Eigen::VectorXd> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = pca_apply(pca, X.row(2 * static_cast<Eigen::Index>(i)).transpose());
    pb[i] = pca_apply(pca, X.row(2 * static_cast<Eigen::Index>(i) + 1).transpose());
  }
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> similar, dissimilar;
  similar.reserve(n);
  dissimilar.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) similar.emplace_back(pa[i], pb[i]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) dissimilar.emplace_back(pa[i], pb[j]);

  MahalanobisMetric metric = kissme_fit(similar, dissimilar);
  metric.pca = pca;
  metric.channel_name = spec.channel;
  return std::make_unique<KissmeMetric>(spec.label, std::move(metric));
}

std::unique_ptr<BaseMetric> fit_klfda(const Dataset& ds,
                                      const std::vector<std::string>& ids,
                                      const MetricSpec& spec, std::uint64_t seed) {
  const std::size_t ch = ds.channel_index(spec.channel);
  const Eigen::MatrixXd X = train_rows(ds, ids, ch);
  const auto n = static_cast<std::size_t>(X.rows());

  KernelParams params;
  params.kind = spec.kernel;
  params.sigma2 = 1.0;

  // bandwidth from a quantile of base distances over at most 10^6 sample
  // pairs, subsampled deterministically when the pair count exceeds the cap
  const std::size_t total = n * (n - 1) / 2;
  constexpr std::size_t kCap = 1000000;
  std::vector<double> dists;
  std::vector<double> bi, bj;
  const auto row_of = [&](std::size_t i, std::vector<double>& buf) {
    buf.resize(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      buf[static_cast<std::size_t>(c)] = X(static_cast<Eigen::Index>(i), c);
    return std::span<const double>(buf.data(), buf.size());
  };
  if (total <= kCap) {
    dists.reserve(total);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ri = row_of(i, bi);
      for (std::size_t j = i + 1; j < n; ++j)
        dists.push_back(kernel_base_distance(params, ri, row_of(j, bj)));
    }
  } else {
    std::mt19937_64 rng(seed);
    dists.reserve(kCap);
    while (dists.size() < kCap) {
      const auto i = static_cast<std::size_t>(uniform_below(rng, n));
      const auto j = static_cast<std::size_t>(uniform_below(rng, n));
      if (i == j) continue;
      dists.push_back(kernel_base_distance(params, row_of(i, bi), row_of(j, bj)));
    }
  }
  params.sigma2 = sigma_from_quantile(std::move(dists), spec.quantile);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / 2);

  KlfdaConfig cfg;
  cfg.kernel = params;
  cfg.r = spec.r;
  KlfdaModel model = klfda_fit(X, labels, cfg);
  return std::make_unique<KlfdaMetric>(spec.label, spec.channel, std::move(model));
}

}  // namespace

MetricBank build_metric_bank(const Dataset& ds,
                             const std::vector<std::string>& train_ids,
                             const std::vector<MetricSpec>& specs,
                             std::uint64_t seed, std::size_t jobs) {
  if (specs.empty()) throw Error("metric bank: no entries configured");
  if (train_ids.size() < 2) throw Error("metric bank: need at least 2 train ids");
  {
    std::set<std::string> seen;
    for (const auto& s : specs)
      if (!seen.insert(s.label).second)
        throw Error("metric bank: duplicate label '" + s.label + "'");
  }

  MetricBank bank;
  bank.metrics.resize(specs.size());
  parallel_for(specs.size(), jobs, [&](std::size_t idx) {
    const MetricSpec& spec = specs[idx];
    try {
      switch (spec.learner) {
        case LearnerKind::euclid: {
          const std::size_t ch = ds.channel_index(spec.channel);
          bank.metrics[idx] = std::make_unique<EuclidMetric>(
              spec.label, spec.channel, ds.channels()[ch].dim);
          break;
        }
        case LearnerKind::kissme:
          bank.metrics[idx] = fit_kissme(ds, train_ids, spec);
          break;
        case LearnerKind::klfda:
          bank.metrics[idx] =
              fit_klfda(ds, train_ids, spec, substream_seed(seed, 0x200 + idx));
          break;
      }
    } catch (const Error& e) {
      throw Error("metric '" + spec.label + "': " + e.what());
    }
  });
  return bank;
}

// --- serialization -------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'M', 'E', 'R', 'M', '1'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.append(reinterpret_cast<const char*>(m.data()),
             static_cast<std::size_t>(m.size()) * sizeof(double));
}

template <typename T>
T take(const std::string& in, std::size_t& off, const std::string& what) {
  if (off + sizeof(T) > in.size()) throw Error("metric file: truncated at " + what);
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string take_string(const std::string& in, std::size_t& off,
                        const std::string& what) {
  const auto len = take<std::uint32_t>(in, off, what);
  if (off + len > in.size()) throw Error("metric file: truncated at " + what);
  std::string s(in.data() + off, len);
  off += len;
  return s;
}

Eigen::MatrixXd take_matrix(const std::string& in, std::size_t& off,
                            const std::string& what) {
  const auto rows = take<std::uint64_t>(in, off, what);
  const auto cols = take<std::uint64_t>(in, off, what);
  if (rows > (1u << 24) || cols > (1u << 24))
    throw Error("metric file: implausible matrix size at " + what);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const std::size_t bytes = static_cast<std::size_t>(rows) * cols * sizeof(double);
  if (off + bytes > in.size()) throw Error("metric file: truncated at " + what);
  std::memcpy(m.data(), in.data() + off, bytes);
  off += bytes;
  return m;
}

std::string metric_filename(std::size_t idx) {
  return "metric_" + std::to_string(idx) + ".bin";
}

}  // namespace

void save_metric_bank(const MetricBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest = "mer-bank v1\n";
  manifest += "metrics " + std::to_string(bank.metrics.size()) + "\n";
  for (std::size_t i = 0; i < bank.metrics.size(); ++i) {
    const BaseMetric& m = *bank.metrics[i];
    manifest += "metric " + std::to_string(i) + " " + metric_filename(i) + " " +
                m.label() + "\n";

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    if (const auto* e = dynamic_cast<const EuclidMetric*>(&m)) {
      put<std::uint8_t>(out, 0);
      put_string(out, e->label());
      put_string(out, e->channel());
      put<std::uint64_t>(out, e->embed_dim());
    } else if (const auto* ks = dynamic_cast<const KissmeMetric*>(&m)) {
      put<std::uint8_t>(out, 1);
      put_string(out, ks->label());
      put_string(out, ks->channel());
      const MahalanobisMetric& mm = ks->metric();
      put_matrix(out, mm.pca.mean);
      put_matrix(out, mm.pca.basis);
      put_matrix(out, mm.pca.variances);
      put<std::uint8_t>(out, mm.pca.degenerate ? 1 : 0);
      put_matrix(out, mm.m_matrix);
    } else if (const auto* kl = dynamic_cast<const KlfdaMetric*>(&m)) {
      put<std::uint8_t>(out, 2);
      put_string(out, kl->label());
      put_string(out, kl->channel());
      const KlfdaModel& md = kl->model();
      put<std::uint8_t>(out, md.kernel.kind == KernelKind::gauss_rbf ? 0 : 1);
      put<double>(out, md.kernel.sigma2);
      put<double>(out, md.kernel.tau);
      put<double>(out, md.beta);
      put<double>(out, md.max_eigen_residual);
      put_matrix(out, md.train_points);
      put_matrix(out, md.coeffs);
      put_matrix(out, md.eigenvalues);
    } else {
      throw Error("save_metric_bank: unknown metric type for '" + m.label() + "'");
    }
    atomic_write_file(dir / metric_filename(i), out);
  }
  atomic_write_file(dir / "manifest.txt", manifest);
}

MetricBank load_metric_bank(const std::filesystem::path& dir) {
  const std::string manifest = read_text_file(dir / "manifest.txt");
  const std::vector<std::string> lines = split(manifest, '\n');
  if (lines.empty() || trim(lines[0]) != "mer-bank v1")
    throw Error("metric bank: unrecognized manifest in " + dir.string());
  std::size_t count = 0;
  std::vector<std::string> files;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string line = trim(lines[li]);
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ' ');
    if (f[0] == "metrics" && f.size() == 2) {
      count = static_cast<std::size_t>(parse_u64(f[1], "bank manifest"));
    } else if (f[0] == "metric" && f.size() >= 4) {
      files.push_back(f[2]);
    } else {
      throw Error("metric bank: bad manifest line '" + line + "'");
    }
  }
  if (files.size() != count)
    throw Error("metric bank: manifest declares " + std::to_string(count) +
                " metrics but lists " + std::to_string(files.size()));

  MetricBank bank;
  for (const auto& fname : files) {
    const std::string in = read_text_file(dir / fname);
    if (in.size() < sizeof(kMagic) ||
        std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
      throw Error("metric file: bad magic in " + (dir / fname).string());
    std::size_t off = sizeof(kMagic);
    const auto kind = take<std::uint8_t>(in, off, "kind");
    const std::string label = take_string(in, off, "label");
    const std::string channel = take_string(in, off, "channel");
    if (kind == 0) {
      const auto dim = take<std::uint64_t>(in, off, "dim");
      bank.metrics.push_back(std::make_unique<EuclidMetric>(
          label, channel, static_cast<std::size_t>(dim)));
    } else if (kind == 1) {
      MahalanobisMetric mm;
      mm.channel_name = channel;
      mm.pca.mean = take_matrix(in, off, "pca mean");
      mm.pca.basis = take_matrix(in, off, "pca basis");
      mm.pca.variances = take_matrix(in, off, "pca variances");
      mm.pca.degenerate = take<std::uint8_t>(in, off, "pca flag") != 0;
      mm.m_matrix = take_matrix(in, off, "M");
      bank.metrics.push_back(std::make_unique<KissmeMetric>(label, std::move(mm)));
    } else if (kind == 2) {
      KlfdaModel md;
      md.kernel.kind = take<std::uint8_t>(in, off, "kernel kind") == 0
                           ? KernelKind::gauss_rbf
                           : KernelKind::chi2_rbf;
      md.kernel.sigma2 = take<double>(in, off, "sigma2");
      md.kernel.tau = take<double>(in, off, "tau");
      md.beta = take<double>(in, off, "beta");
      md.max_eigen_residual = take<double>(in, off, "residual");
      md.train_points = take_matrix(in, off, "train points");
      md.coeffs = take_matrix(in, off, "coeffs");
      md.eigenvalues = take_matrix(in, off, "eigenvalues");
      bank.metrics.push_back(
          std::make_unique<KlfdaMetric>(label, channel, std::move(md)));
    } else {
      throw Error("metric file: unknown kind in " + (dir / fname).string());
    }
  }
  return bank;
}

}  // namespace mer
