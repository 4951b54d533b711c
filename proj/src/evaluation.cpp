#include "mer/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "mer/kernels.hpp"
#include "mer/util.hpp"

namespace mer {

MatrixRM ensemble_distance_matrix(std::span<const double> w,
                                  const DistanceTensor& tensor) {
  const std::size_t m = tensor.size();
  const std::size_t T = tensor.num_metrics();
  if (w.size() != T)
    throw Error("ensemble_distance_matrix: weight count " + std::to_string(w.size()) +
                " does not match metric count " + std::to_string(T));
  for (double v : w)
    if (!std::isfinite(v)) throw Error("ensemble_distance_matrix: non-finite weight");
  MatrixRM out(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kernels::dot(w.data(), tensor.pair(i, j).data(), T);
  return out;
}

MatrixRM normalize_per_probe(const MatrixRM& d, std::size_t* constant_rows) {
  MatrixRM out(d.rows(), d.cols());
  if (constant_rows) *constant_rows = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const double* row = d.data() + i * d.cols();
    const auto mm = kernels::minmax(row, static_cast<std::size_t>(d.cols()));
    const double range = mm.max - mm.min;
    if (range > 0.0) {
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        out(i, j) = (d(i, j) - mm.min) / range;
    } else {
      out.row(i).setZero();
      if (constant_rows) ++*constant_rows;
    }
  }
  return out;
}

MatrixRM uniform_baseline_matrix(const DistanceTensor& tensor) {
  const std::size_t m = tensor.size();
  const std::size_t T = tensor.num_metrics();
  MatrixRM acc = MatrixRM::Zero(m, m);
  MatrixRM slice(m, m);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        slice(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            tensor.at(i, j, t);
    acc += normalize_per_probe(slice);
  }
  acc /= static_cast<double>(T);
  return acc;
}

namespace {

CmcCurve cmc_from_ranks(const std::vector<std::size_t>& ranks, std::size_t gallery) {
  CmcCurve curve;
  curve.num_probes = ranks.size();
  std::vector<std::size_t> counts(gallery, 0);
  for (const std::size_t r : ranks) ++counts[r - 1];
  curve.rates.resize(gallery);
  std::size_t cum = 0;
  for (std::size_t r = 0; r < gallery; ++r) {
    cum += counts[r];
    curve.rates[r] = static_cast<double>(cum) / static_cast<double>(ranks.size());
  }
  return curve;
}

}  // namespace

CmcCurve cmc_curve(const MatrixRM& distances, const std::vector<std::size_t>& match_col) {
  const auto n = static_cast<std::size_t>(distances.rows());
  const auto g = static_cast<std::size_t>(distances.cols());
  if (n == 0 || g == 0) throw Error("cmc_curve: empty distance matrix");
  if (match_col.size() != n)
    throw Error("cmc_curve: need one match column per probe row");
  if (!distances.allFinite()) throw Error("cmc_curve: non-finite distance");

  std::vector<std::size_t> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = match_col[i];
    if (c >= g) throw Error("cmc_curve: match column out of range");
    const double dm = distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    std::size_t rank = 1;
    for (std::size_t j = 0; j < g; ++j) {
      if (j == c) continue;
      const double dj = distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (dj < dm || (dj == dm && j < c)) ++rank;
    }
    ranks[i] = rank;
  }
  return cmc_from_ranks(ranks, g);
}

CmcCurve cmc_curve(const MatrixRM& distances) {
  if (distances.rows() != distances.cols())
    throw Error("cmc_curve: square protocol needs a square matrix");
  std::vector<std::size_t> diag(static_cast<std::size_t>(distances.rows()));
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = i;
  return cmc_curve(distances, diag);
}

EvalReport aggregate(std::string method, std::vector<CmcCurve> per_split,
                     const std::vector<std::size_t>& ranks) {
  if (per_split.empty()) throw Error("aggregate: no curves");
  EvalReport rep;
  rep.method = std::move(method);

  std::size_t len = per_split.front().rates.size();
  for (const auto& c : per_split) {
    if (c.rates.empty()) throw Error("aggregate: empty curve");
    if (c.rates.size() != len) rep.truncated = true;
    len = std::min(len, c.rates.size());
  }
  rep.mean_curve.assign(len, 0.0);
  for (const auto& c : per_split)
    for (std::size_t r = 0; r < len; ++r) rep.mean_curve[r] += c.rates[r];
  for (double& v : rep.mean_curve) v /= static_cast<double>(per_split.size());

  for (const std::size_t r : ranks) {
    if (r == 0) throw Error("aggregate: ranks are 1-based");
    const std::size_t clipped = std::min(r, len);
    if (!rep.ranks.empty() && rep.ranks.back() >= clipped) continue;
    rep.ranks.push_back(clipped);
    rep.mean_at_ranks.push_back(rep.mean_curve[clipped - 1]);
  }
  rep.per_split = std::move(per_split);
  return rep;
}

namespace {

std::string header_line(const EvalReport& rep) {
  std::string s = "rank,mean";
  for (std::size_t i = 0; i < rep.per_split.size(); ++i)
    s += ",split_" + std::to_string(i);
  return s;
}

std::string rank_row(const EvalReport& rep, std::size_t rank) {
  std::string s = std::to_string(rank);
  s += ',';
  s += format_double(rep.mean_curve[rank - 1]);
  for (const auto& c : rep.per_split) {
    s += ',';
    s += format_double(c.rates[rank - 1]);
  }
  return s;
}

}  // namespace

void write_report_csv(const EvalReport& rep, const std::filesystem::path& path) {
  std::string out = "# mer-report v1\n# method " + rep.method + "\n";
  out += header_line(rep) + "\n";
  for (const std::size_t r : rep.ranks) out += rank_row(rep, r) + "\n";
  atomic_write_file(path, out);
}

void write_curve_csv(const EvalReport& rep, const std::filesystem::path& path) {
  std::string out = "# mer-curve v1\n# method " + rep.method + "\n";
  out += header_line(rep) + "\n";
  for (std::size_t r = 1; r <= rep.mean_curve.size(); ++r)
    out += rank_row(rep, r) + "\n";
  atomic_write_file(path, out);
}

ReportTable read_report_csv(const std::filesystem::path& path) {
  ReportTable table;
  const std::vector<std::string> lines = split(read_text_file(path), '\n');
  bool header_seen = false;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string line = trim(lines[li]);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto fields = split(line, ' ');
      if (fields.size() >= 3 && fields[1] == "method") table.method = fields[2];
      continue;
    }
    const std::string ctx = path.string() + ":" + std::to_string(li + 1);
    const auto cells = split(line, ',');
    if (!header_seen) {
      table.header = cells;
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, ctx));
    if (row.size() != table.header.size())
      throw Error(ctx + ": row width does not match header");
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) throw Error(path.string() + ": no table header found");
  return table;
}

}  // namespace mer
