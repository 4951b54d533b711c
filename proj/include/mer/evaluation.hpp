#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mer/tensor.hpp"

namespace mer {

// row-major so probe rows are contiguous for the SIMD kernels
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// entry (i, j) = w . D[i][j]
MatrixRM ensemble_distance_matrix(std::span<const double> w,
                                  const DistanceTensor& tensor);

// per-probe min-max normalization; constant rows map to zeros and are
// counted in *constant_rows when given
MatrixRM normalize_per_probe(const MatrixRM& d, std::size_t* constant_rows = nullptr);

// mean of the min-max normalized per-metric slices
MatrixRM uniform_baseline_matrix(const DistanceTensor& tensor);

struct CmcCurve {
  std::vector<double> rates;  // one entry per rank, length = gallery size
  std::size_t num_probes = 0;
};

// square protocol: the match of probe i sits in column i. Ranking is by
// ascending distance with ties broken by ascending gallery index.
CmcCurve cmc_curve(const MatrixRM& distances);
// general protocol with an explicit match column per probe row
CmcCurve cmc_curve(const MatrixRM& distances, const std::vector<std::size_t>& match_col);

struct EvalReport {
  std::string method;
  std::vector<std::size_t> ranks;      // requested rank table, clipped
  std::vector<CmcCurve> per_split;
  std::vector<double> mean_curve;
  std::vector<double> mean_at_ranks;   // aligned with `ranks`
  bool truncated = false;              // split curves had unequal lengths
};

EvalReport aggregate(std::string method, std::vector<CmcCurve> per_split,
                     const std::vector<std::size_t>& ranks);

void write_report_csv(const EvalReport& rep, const std::filesystem::path& path);
void write_curve_csv(const EvalReport& rep, const std::filesystem::path& path);

struct ReportTable {
  std::string method;
  std::vector<std::string> header;            // column names
  std::vector<std::vector<double>> rows;      // numeric cells per line
};
ReportTable read_report_csv(const std::filesystem::path& path);

}  // namespace mer
