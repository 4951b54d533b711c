#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mer/qp.hpp"
#include "mer/tensor.hpp"

namespace mer {

enum class Objective { cmc_top, cmc_triplet, uniform };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& s);

// Binary ordering of the non-matching gallery items of every probe: row i has
// one column per gallery index j != i, and entry 1 marks a candidate ranked
// above the true match. Column c of row i refers to gallery index c when
// c < i and c + 1 otherwise. The all-zeros matrix is the ideal ordering.
// The triplet oracle reuses the structure as a violation indicator.
class OrderingMatrix {
 public:
  explicit OrderingMatrix(std::size_t m);

  std::size_t size() const { return m_; }       // probes
  std::size_t columns() const { return m_ - 1; }

  std::uint8_t get(std::size_t i, std::size_t c) const { return p_[i * (m_ - 1) + c]; }
  void set(std::size_t i, std::size_t c, bool v) { p_[i * (m_ - 1) + c] = v ? 1 : 0; }

  static std::size_t gallery_index(std::size_t i, std::size_t c) {
    return c < i ? c : c + 1;
  }
  static std::size_t column_of(std::size_t i, std::size_t j) {
    return j < i ? j : j - 1;
  }

  std::size_t count_ones() const;
  bool operator==(const OrderingMatrix& o) const = default;

 private:
  std::size_t m_;
  std::vector<std::uint8_t> p_;
};

struct TrainingConfig {
  Objective objective = Objective::cmc_top;
  double nu = 100.0;
  std::size_t k = 10;
  double epsilon = 1e-6;
  std::size_t max_iterations = 500;
};

struct TrainingDiagnostics {
  std::size_t iterations = 0;  // separation oracle calls
  double final_xi = 0.0;
  double final_violation = 0.0;
  bool converged = false;
  std::vector<double> objective_history;  // 0.5||w||^2 + nu*xi per solve
};

struct EnsembleModel {
  std::vector<double> weights;
  std::vector<std::string> metric_labels;
  TrainingConfig config;
  TrainingDiagnostics diagnostics;
};

// rank-k loss of ordering P under the ranking induced by w (ascending
// ensemble distance, ties by ascending gallery index)
double delta_loss(const OrderingMatrix& P, std::span<const double> w,
                  const DistanceTensor& tensor, std::size_t k);

// (1/(m k)) sum_i sum_j (1 - p_ij) (D[i][j] - D[i][i]), one value per metric
std::vector<double> feature_map_psi(const OrderingMatrix& P,
                                    const DistanceTensor& tensor, std::size_t k);

struct OracleResult {
  OrderingMatrix ordering;
  double violation;
};

// most violated ordering for the rank-k objective; violation is
// delta_loss(P) - w.(psi(ideal) - psi(P))
OracleResult most_violated_top(std::span<const double> w,
                               const DistanceTensor& tensor, std::size_t k);

// most violated aggregate triplet constraint; the ordering marks pairs with
// margin < 1 and violation is b - w.g - xi_current
OracleResult most_violated_triplet(std::span<const double> w,
                                   const DistanceTensor& tensor,
                                   double xi_current = 0.0);

WorkingConstraint constraint_from_top(const OrderingMatrix& P,
                                      std::span<const double> w,
                                      const DistanceTensor& tensor, std::size_t k);
WorkingConstraint constraint_from_triplet(const OrderingMatrix& C,
                                          const DistanceTensor& tensor);

EnsembleModel train(const DistanceTensor& tensor, const TrainingConfig& config);

// maps an id subset to its distance tensor (used for cross-validation folds)
using TensorBuilder =
    std::function<DistanceTensor(const std::vector<std::string>& ids)>;

std::vector<double> default_nu_grid(Objective o);

struct CvEntry {
  double nu;
  double mean_rank1;
};

// k-fold cross-validation over the grid; picks the nu with the best mean
// fold rank-1 rate, breaking ties toward the smaller value
double cross_validate_nu(const TensorBuilder& builder,
                         const std::vector<std::string>& train_ids,
                         const std::vector<double>& grid, std::size_t folds,
                         const TrainingConfig& base, std::uint64_t seed,
                         std::vector<CvEntry>* table = nullptr);

}  // namespace mer
