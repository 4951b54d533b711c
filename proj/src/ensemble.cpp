#include "mer/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "mer/evaluation.hpp"
#include "mer/kernels.hpp"
#include "mer/util.hpp"

namespace mer {

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::cmc_top: return "cmc_top";
    case Objective::cmc_triplet: return "cmc_triplet";
    case Objective::uniform: return "uniform";
  }
  throw Error("objective_name: bad enum value");
}

Objective objective_from_name(const std::string& s) {
  if (s == "cmc_top") return Objective::cmc_top;
  if (s == "cmc_triplet") return Objective::cmc_triplet;
  if (s == "uniform") return Objective::uniform;
  throw Error("unknown objective '" + s + "' (expected cmc_top, cmc_triplet or uniform)");
}

OrderingMatrix::OrderingMatrix(std::size_t m) : m_(m) {
  if (m < 2) throw Error("ordering matrix: need m >= 2");
  p_.assign(m * (m - 1), 0);
}

std::size_t OrderingMatrix::count_ones() const {
  return static_cast<std::size_t>(std::count(p_.begin(), p_.end(), 1));
}

namespace {

void check_w(std::span<const double> w, const DistanceTensor& tensor,
             const char* who) {
  if (w.size() != tensor.num_metrics())
    throw Error(std::string(who) + ": weight vector has " +
                std::to_string(w.size()) + " entries, tensor has " +
                std::to_string(tensor.num_metrics()) + " metrics");
  for (double v : w)
    if (!std::isfinite(v))
      throw Error(std::string(who) + ": non-finite weight");
}

void check_k(std::size_t k, std::size_t m, const char* who) {
  if (k < 1 || k > m - 1)
    throw Error(std::string(who) + ": k=" + std::to_string(k) +
                " outside [1, m-1] with m=" + std::to_string(m));
}

void check_shape(const OrderingMatrix& P, const DistanceTensor& tensor,
                 const char* who) {
  if (P.size() != tensor.size())
    throw Error(std::string(who) + ": ordering is m=" + std::to_string(P.size()) +
                ", tensor is m=" + std::to_string(tensor.size()));
}

// margins[c] = w.(D[i][gallery(c)] - D[i][i]) for one probe i
void probe_margins(std::span<const double> w, const DistanceTensor& tensor,
                   std::size_t i, std::vector<double>& margins) {
  const std::size_t m = tensor.size();
  const std::size_t T = tensor.num_metrics();
  const auto self = tensor.pair(i, i);
  const double s_plus = kernels::dot(w.data(), self.data(), T);
  margins.resize(m - 1);
  for (std::size_t c = 0; c < m - 1; ++c) {
    const auto cand = tensor.pair(i, OrderingMatrix::gallery_index(i, c));
    margins[c] = kernels::dot(w.data(), cand.data(), T) - s_plus;
  }
}

// candidate columns of probe i sorted by ascending margin, ties by ascending
// gallery index (== ascending column)
void rank_columns(const std::vector<double>& margins, std::vector<std::size_t>& order) {
  order.resize(margins.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return margins[a] < margins[b]; });
}

}  // namespace

double delta_loss(const OrderingMatrix& P, std::span<const double> w,
                  const DistanceTensor& tensor, std::size_t k) {
  check_shape(P, tensor, "delta_loss");
  check_w(w, tensor, "delta_loss");
  const std::size_t m = tensor.size();
  check_k(k, m, "delta_loss");

  double total = 0.0;
  std::vector<double> margins;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < m; ++i) {
    probe_margins(w, tensor, i, margins);
    rank_columns(margins, order);
    for (std::size_t j = 0; j < k; ++j) total += P.get(i, order[j]);
  }
  return total / (static_cast<double>(m) * static_cast<double>(k));
}

std::vector<double> feature_map_psi(const OrderingMatrix& P,
                                    const DistanceTensor& tensor, std::size_t k) {
  check_shape(P, tensor, "feature_map_psi");
  const std::size_t m = tensor.size();
  check_k(k, m, "feature_map_psi");
  const std::size_t T = tensor.num_metrics();

  std::vector<double> psi(T, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto self = tensor.pair(i, i);
    for (std::size_t c = 0; c < m - 1; ++c) {
      if (P.get(i, c)) continue;
      const auto cand = tensor.pair(i, OrderingMatrix::gallery_index(i, c));
      for (std::size_t t = 0; t < T; ++t) psi[t] += cand[t] - self[t];
    }
  }
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(k));
  for (double& v : psi) v *= norm;
  return psi;
}

OracleResult most_violated_top(std::span<const double> w,
                               const DistanceTensor& tensor, std::size_t k) {
  check_w(w, tensor, "most_violated_top");
  const std::size_t m = tensor.size();
  check_k(k, m, "most_violated_top");

  OrderingMatrix P(m);
  double violation = 0.0;
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(k));
  std::vector<double> margins;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < m; ++i) {
    probe_margins(w, tensor, i, margins);
    rank_columns(margins, order);
    for (std::size_t j = 0; j < m - 1; ++j) {
      const std::size_t c = order[j];
      const double gain = j < k ? 1.0 - margins[c] : -margins[c];
      if (gain >= 0.0) {
        P.set(i, c, true);
        violation += gain * norm;
      }
    }
  }
  return {std::move(P), violation};
}

OracleResult most_violated_triplet(std::span<const double> w,
                                   const DistanceTensor& tensor,
                                   double xi_current) {
  check_w(w, tensor, "most_violated_triplet");
  const std::size_t m = tensor.size();
  const std::size_t T = tensor.num_metrics();

  OrderingMatrix C(m);
  std::vector<double> g(T, 0.0);
  double count = 0.0;
  std::vector<double> margins;
  for (std::size_t i = 0; i < m; ++i) {
    const auto self = tensor.pair(i, i);
    probe_margins(w, tensor, i, margins);
    for (std::size_t c = 0; c < m - 1; ++c) {
      if (margins[c] < 1.0) {
        C.set(i, c, true);
        count += 1.0;
        const auto cand = tensor.pair(i, OrderingMatrix::gallery_index(i, c));
        for (std::size_t t = 0; t < T; ++t) g[t] += cand[t] - self[t];
      }
    }
  }
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
  for (double& v : g) v *= norm;
  const double b = count * norm;
  const double violation = b - kernels::dot(w.data(), g.data(), T) - xi_current;
  return {std::move(C), violation};
}

WorkingConstraint constraint_from_top(const OrderingMatrix& P,
                                      std::span<const double> w,
                                      const DistanceTensor& tensor, std::size_t k) {
  const std::vector<double> ideal = feature_map_psi(OrderingMatrix(tensor.size()),
                                                    tensor, k);
  const std::vector<double> found = feature_map_psi(P, tensor, k);
  WorkingConstraint c;
  c.direction.resize(ideal.size());
  for (std::size_t t = 0; t < ideal.size(); ++t)
    c.direction[t] = ideal[t] - found[t];
  c.offset = delta_loss(P, w, tensor, k);
  return c;
}

WorkingConstraint constraint_from_triplet(const OrderingMatrix& C,
                                          const DistanceTensor& tensor) {
  check_shape(C, tensor, "constraint_from_triplet");
  const std::size_t m = tensor.size();
  const std::size_t T = tensor.num_metrics();
  WorkingConstraint out;
  out.direction.assign(T, 0.0);
  double count = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto self = tensor.pair(i, i);
    for (std::size_t c = 0; c < m - 1; ++c) {
      if (!C.get(i, c)) continue;
      count += 1.0;
      const auto cand = tensor.pair(i, OrderingMatrix::gallery_index(i, c));
      for (std::size_t t = 0; t < T; ++t) out.direction[t] += cand[t] - self[t];
    }
  }
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
  for (double& v : out.direction) v *= norm;
  out.offset = count * norm;
  return out;
}

EnsembleModel train(const DistanceTensor& tensor, const TrainingConfig& config) {
  if (config.objective == Objective::uniform)
    throw Error("train: the uniform baseline is not trained");
  if (!(config.nu > 0.0)) throw Error("train: nu must be positive");
  if (!(config.epsilon > 0.0)) throw Error("train: epsilon must be positive");
  if (config.max_iterations == 0) throw Error("train: max_iterations must be >= 1");
  const std::size_t m = tensor.size();
  const std::size_t T = tensor.num_metrics();
  if (config.objective == Objective::cmc_top) check_k(config.k, m, "train");

  EnsembleModel model;
  model.metric_labels = tensor.metric_labels();
  model.config = config;

  std::vector<double> w(T, 0.0);
  double xi = 0.0;
  std::vector<WorkingConstraint> constraints;

  auto& diag = model.diagnostics;
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    if (!constraints.empty()) {
      const QpSolution sol = solve_working_set_qp(constraints, config.nu);
      w = sol.weights;
      xi = sol.xi;
    }
    const double wnorm2 = kernels::dot(w.data(), w.data(), T);
    diag.objective_history.push_back(0.5 * wnorm2 + config.nu * xi);
    diag.iterations = it;
    diag.final_xi = xi;

    if (config.objective == Objective::cmc_top) {
      OracleResult res = most_violated_top(w, tensor, config.k);
      diag.final_violation = res.violation;
      if (res.violation <= xi + config.epsilon) {
        diag.converged = true;
        break;
      }
      constraints.push_back(constraint_from_top(res.ordering, w, tensor, config.k));
    } else {
      OracleResult res = most_violated_triplet(w, tensor, xi);
      diag.final_violation = res.violation;
      if (res.violation <= config.epsilon) {
        diag.converged = true;
        break;
      }
      constraints.push_back(constraint_from_triplet(res.ordering, tensor));
    }
  }

  model.weights = std::move(w);
  return model;
}

std::vector<double> default_nu_grid(Objective o) {
  const double base = o == Objective::cmc_triplet ? 3.0 : 2.0;
  std::vector<double> grid;
  grid.reserve(11);
  for (int i = 0; i <= 10; ++i)
    grid.push_back(std::pow(10.0, base + 0.1 * static_cast<double>(i)));
  return grid;
}

double cross_validate_nu(const TensorBuilder& builder,
                         const std::vector<std::string>& train_ids,
                         const std::vector<double>& grid, std::size_t folds,
                         const TrainingConfig& base, std::uint64_t seed,
                         std::vector<CvEntry>* table) {
  if (grid.empty()) throw Error("cross_validate_nu: empty grid");
  if (folds < 2) throw Error("cross_validate_nu: need at least 2 folds");
  if (train_ids.size() < 2 * folds)
    throw Error("cross_validate_nu: " + std::to_string(train_ids.size()) +
                " train ids cannot populate " + std::to_string(folds) +
                " folds of size >= 2");

  std::vector<std::string> shuffled = train_ids;
  std::mt19937_64 rng(substream_seed(seed, 0x5eed));
  deterministic_shuffle(shuffled, rng);

  std::vector<std::vector<std::string>> fold_ids(folds);
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    fold_ids[i % folds].push_back(shuffled[i]);
  std::vector<std::vector<std::string>> fit_ids(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::sort(fold_ids[f].begin(), fold_ids[f].end());
    for (std::size_t g = 0; g < folds; ++g)
      if (g != f)
        fit_ids[f].insert(fit_ids[f].end(), fold_ids[g].begin(), fold_ids[g].end());
    std::sort(fit_ids[f].begin(), fit_ids[f].end());
  }

  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());

  double best_nu = sorted_grid.front();
  double best_score = -1.0;
  for (const double nu : sorted_grid) {
    if (!(nu > 0.0)) throw Error("cross_validate_nu: grid values must be positive");
    double score = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      TrainingConfig cfg = base;
      cfg.nu = nu;
      const DistanceTensor fit_tensor = builder(fit_ids[f]);
      if (cfg.objective == Objective::cmc_top)
        cfg.k = std::min(cfg.k, fit_tensor.size() - 1);
      const EnsembleModel model = train(fit_tensor, cfg);
      const DistanceTensor val_tensor = builder(fold_ids[f]);
      const CmcCurve curve = cmc_curve(ensemble_distance_matrix(model.weights, val_tensor));
      score += curve.rates.at(0);
    }
    score /= static_cast<double>(folds);
    if (table) table->push_back({nu, score});
    if (score > best_score + 1e-12) {
      best_score = score;
      best_nu = nu;
    }
  }
  return best_nu;
}

}  // namespace mer
