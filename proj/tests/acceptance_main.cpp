// Acceptance gate. Each criterion prints one [PASS]/[FAIL] line; the process
// exits nonzero if any criterion fails. All randomness is seeded, so a failure
// reproduces by rerunning the binary.

#include <fcntl.h>
#include <unistd.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mer/config.hpp"
#include "mer/dataset.hpp"
#include "mer/ensemble.hpp"
#include "mer/evaluation.hpp"
#include "mer/kissme.hpp"
#include "mer/klfda.hpp"
#include "mer/metric_bank.hpp"
#include "mer/qp.hpp"
#include "mer/runner.hpp"
#include "mer/synth.hpp"
#include "mer/tensor.hpp"
#include "mer/util.hpp"

namespace fs = std::filesystem;
using namespace mer;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

DistanceTensor random_tensor(std::size_t m, std::size_t T, std::mt19937_64& rng,
                             bool quantized) {
  std::vector<std::string> ids, labels;
  for (std::size_t i = 0; i < m; ++i) ids.push_back("p" + std::to_string(i));
  for (std::size_t t = 0; t < T; ++t) labels.push_back("c" + std::to_string(t));
  DistanceTensor out(std::move(ids), std::move(labels));
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::uniform_int_distribution<int> q(0, 4);
  for (double& v : out.values()) v = quantized ? 0.5 * q(rng) : u(rng);
  return out;
}

// swallows the informational printf output of the pipeline commands
class StdoutSilencer {
 public:
  StdoutSilencer() {
    std::fflush(stdout);
    saved_ = dup(1);
    const int devnull = open("/dev/null", O_WRONLY);
    dup2(devnull, 1);
    close(devnull);
  }
  ~StdoutSilencer() {
    std::fflush(stdout);
    dup2(saved_, 1);
    close(saved_);
  }

 private:
  int saved_ = -1;
};

// ---------------------------------------------------------------------------
// 1. separation-oracle exactness against exhaustive enumeration

std::string criterion_oracles() {
  std::mt19937_64 rng(20260815);
  std::uniform_real_distribution<double> uw(0.0, 1.5);

  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t m = 3 + inst % 3;
    const std::size_t T = 1 + (inst / 3) % 3;
    DistanceTensor tensor = random_tensor(m, T, rng, inst % 5 == 0);
    std::vector<double> w(T, 0.0);
    if (inst % 7 != 0)
      for (double& v : w) v = uw(rng);
    const std::size_t k = 1 + rng() % (m - 1);

    // Per-entry violation contributions, derived from the definitions: entry
    // (i,c) adds its margin to -w.(psi(ideal)-psi(P)) and, when gallery c is
    // among the k lowest-margin candidates of probe i, one unit to the loss.
    const std::size_t cols = m - 1;
    const std::size_t bits = m * cols;
    std::vector<double> contrib_top(bits), contrib_tri(bits);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> margin(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t j = c < i ? c : c + 1;
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t)
          s += w[t] * (tensor.at(i, j, t) - tensor.at(i, i, t));
        margin[c] = s;
      }
      std::vector<std::size_t> order(cols);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return margin[a] < margin[b] || (margin[a] == margin[b] && a < b);
      });
      std::vector<char> topk(cols, 0);
      for (std::size_t p = 0; p < k; ++p) topk[order[p]] = 1;
      for (std::size_t c = 0; c < cols; ++c) {
        contrib_top[i * cols + c] =
            ((topk[c] ? 1.0 : 0.0) - margin[c]) / static_cast<double>(m * k);
        contrib_tri[i * cols + c] =
            (1.0 - margin[c]) / static_cast<double>(m * (m - 1));
      }
    }

    // anchor the decomposition against the public constraint builders
    for (int probe = 0; probe < 6; ++probe) {
      const std::uint64_t mask = rng() & ((1ull << bits) - 1);
      OrderingMatrix P(m);
      double inc_top = 0.0, inc_tri = 0.0;
      for (std::size_t bit = 0; bit < bits; ++bit)
        if (mask >> bit & 1) {
          P.set(bit / cols, bit % cols, true);
          inc_top += contrib_top[bit];
          inc_tri += contrib_tri[bit];
        }
      const WorkingConstraint ct = constraint_from_top(P, w, tensor, k);
      if (std::abs(ct.offset - dot(w, ct.direction) - inc_top) > 1e-10)
        return "instance " + std::to_string(inst) +
               ": per-entry decomposition disagrees with constraint_from_top";
      const WorkingConstraint cr = constraint_from_triplet(P, tensor);
      if (std::abs(cr.offset - dot(w, cr.direction) - inc_tri) > 1e-10)
        return "instance " + std::to_string(inst) +
               ": per-entry decomposition disagrees with constraint_from_triplet";
    }

    // Gray-code sweep over every ordering; one entry flips per step
    double best_top = 0.0, best_tri = 0.0, cur_top = 0.0, cur_tri = 0.0;
    std::vector<char> on(bits, 0);
    for (std::uint64_t x = 1; x < (1ull << bits); ++x) {
      const int bit = std::countr_zero(x);
      if (on[bit]) {
        cur_top -= contrib_top[bit];
        cur_tri -= contrib_tri[bit];
        on[bit] = 0;
      } else {
        cur_top += contrib_top[bit];
        cur_tri += contrib_tri[bit];
        on[bit] = 1;
      }
      best_top = std::max(best_top, cur_top);
      best_tri = std::max(best_tri, cur_tri);
    }

    const OracleResult rt = most_violated_top(w, tensor, k);
    if (std::abs(rt.violation - best_top) > 1e-10)
      return "instance " + std::to_string(inst) + ": top oracle " +
             num(rt.violation) + " vs enumeration " + num(best_top);
    const WorkingConstraint at = constraint_from_top(rt.ordering, w, tensor, k);
    if (std::abs(at.offset - dot(w, at.direction) - best_top) > 1e-10)
      return "instance " + std::to_string(inst) +
             ": top oracle ordering does not attain the enumerated maximum";

    const OracleResult rr = most_violated_triplet(w, tensor);
    if (std::abs(rr.violation - best_tri) > 1e-10)
      return "instance " + std::to_string(inst) + ": triplet oracle " +
             num(rr.violation) + " vs enumeration " + num(best_tri);
    const WorkingConstraint ar = constraint_from_triplet(rr.ordering, tensor);
    if (std::abs(ar.offset - dot(w, ar.direction) - best_tri) > 1e-10)
      return "instance " + std::to_string(inst) +
             ": triplet oracle ordering does not attain the enumerated maximum";
  }
  return "";
}

// ---------------------------------------------------------------------------
// 2. working-set QP against a projected-gradient reference

void project_budget_simplex(std::vector<double>& a, double budget) {
  for (double& v : a) v = std::max(0.0, v);
  double sum = 0.0;
  for (double v : a) sum += v;
  if (sum <= budget) return;
  // shift so the positive part sums to the budget
  std::vector<double> s = a;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cum += s[i];
    const double cand = (cum - budget) / static_cast<double>(i + 1);
    if (i + 1 == s.size() || s[i + 1] <= cand) {
      theta = cand;
      break;
    }
  }
  for (double& v : a) v = std::max(0.0, v - theta);
}

double dual_value(const std::vector<std::vector<double>>& G,
                  const std::vector<double>& b, const std::vector<double>& a) {
  const std::size_t T = G.empty() ? 0 : G[0].size();
  std::vector<double> w(T, 0.0);
  for (std::size_t r = 0; r < G.size(); ++r)
    for (std::size_t t = 0; t < T; ++t) w[t] += a[r] * G[r][t];
  double v = 0.0;
  for (std::size_t r = 0; r < G.size(); ++r) v += a[r] * b[r];
  for (double x : w) {
    const double p = std::max(0.0, x);
    v -= 0.5 * p * p;
  }
  return v;
}

// accelerated projected gradient on the dual with adaptive restarts
double dual_pg_reference(const std::vector<std::vector<double>>& G,
                         const std::vector<double>& b, double nu) {
  const std::size_t R = G.size();
  const std::size_t T = G[0].size();

  // Lipschitz bound via power iteration on G G^T
  std::vector<double> v(R, 1.0 / std::sqrt(static_cast<double>(R)));
  double lam = 1.0;
  for (int it = 0; it < 50; ++it) {
    std::vector<double> tmp(T, 0.0);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t t = 0; t < T; ++t) tmp[t] += v[r] * G[r][t];
    std::vector<double> nv(R, 0.0);
    double norm = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      nv[r] = dot(G[r], tmp);
      norm += nv[r] * nv[r];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    lam = norm;
    for (std::size_t r = 0; r < R; ++r) v[r] = nv[r] / norm;
  }
  const double step = 1.0 / (1.05 * std::max(lam, 1e-12));

  std::vector<double> a(R, 0.0), y(R, 0.0), w(T), grad(R), next(R);
  double t_momentum = 1.0;
  double best = 0.0;
  double last_best = -1e300;
  int stable = 0;
  for (std::size_t iter = 0; iter < 120000; ++iter) {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t t = 0; t < T; ++t) w[t] += y[r] * G[r][t];
    for (double& x : w) x = std::max(0.0, x);
    for (std::size_t r = 0; r < R; ++r) grad[r] = b[r] - dot(G[r], w);

    for (std::size_t r = 0; r < R; ++r) next[r] = y[r] + step * grad[r];
    project_budget_simplex(next, nu);

    double ascent = 0.0;
    for (std::size_t r = 0; r < R; ++r) ascent += grad[r] * (next[r] - a[r]);
    if (ascent < 0.0) {  // restart the momentum when it points downhill
      y = a;
      t_momentum = 1.0;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
    for (std::size_t r = 0; r < R; ++r)
      y[r] = next[r] + (t_momentum - 1.0) / t_next * (next[r] - a[r]);
    a = next;
    t_momentum = t_next;

    if (iter % 200 == 199) {
      best = std::max(best, dual_value(G, b, a));
      if (best <= last_best + 1e-14 * (1.0 + std::abs(best))) {
        if (++stable >= 3) break;
      } else {
        stable = 0;
      }
      last_best = best;
    }
  }
  return std::max(best, dual_value(G, b, a));
}

std::string criterion_qp() {
  std::mt19937_64 rng(99021);
  std::uniform_real_distribution<double> ug(-1.0, 1.0);
  std::uniform_real_distribution<double> ub(-0.2, 1.2);
  std::uniform_real_distribution<double> us(0.2, 5.0);
  const double nus[] = {0.7, 5.0, 120.0, 3000.0};

  for (int case_i = 0; case_i < 100; ++case_i) {
    const std::size_t R = 1 + rng() % 20;
    const std::size_t T = 1 + rng() % 10;
    const double nu = nus[case_i % 4];

    std::vector<WorkingConstraint> cs(R);
    for (std::size_t r = 0; r < R; ++r) {
      const double scale = case_i % 3 == 0 ? us(rng) : 1.0;
      cs[r].direction.resize(T);
      for (double& v : cs[r].direction) v = scale * ug(rng);
      cs[r].offset = ub(rng);
      if (case_i % 9 == 0 && r == 0) {  // an all-zero direction forces xi
        std::fill(cs[r].direction.begin(), cs[r].direction.end(), 0.0);
        cs[r].offset = 0.4;
      }
    }
    if (R > 1 && case_i % 6 == 0) cs[R - 1] = cs[0];  // duplicate row

    const QpSolution sol = solve_working_set_qp(cs, nu);

    if (sol.kkt_residual > 1e-8)
      return "case " + std::to_string(case_i) + ": kkt residual " +
             num(sol.kkt_residual);
    for (double x : sol.weights)
      if (x < 0.0) return "case " + std::to_string(case_i) + ": negative weight";
    if (sol.xi < 0.0) return "case " + std::to_string(case_i) + ": negative slack";

    double worst = 0.0;
    for (const auto& c : cs)
      worst = std::max(worst, c.offset - dot(sol.weights, c.direction));
    const double xi_feasible = std::max(0.0, worst);
    double obj = 0.5 * dot(sol.weights, sol.weights) + nu * xi_feasible;

    std::vector<std::vector<double>> G(R);
    std::vector<double> b(R);
    for (std::size_t r = 0; r < R; ++r) {
      G[r] = cs[r].direction;
      b[r] = cs[r].offset;
    }
    const double ref = dual_pg_reference(G, b, nu);
    if (obj < ref - 1e-9 * (1.0 + std::abs(ref)))
      return "case " + std::to_string(case_i) + ": objective " + num(obj) +
             " below the dual bound " + num(ref);
    if (obj - ref > 1e-6 * (1.0 + std::abs(ref)))
      return "case " + std::to_string(case_i) + ": objective " + num(obj) +
             " does not match the reference " + num(ref);
  }
  return "";
}

// ---------------------------------------------------------------------------
// 3. cutting-plane contract

std::string check_training_contract(const EnsembleModel& model,
                                    const TrainingConfig& cfg,
                                    const std::string& tag) {
  const auto& d = model.diagnostics;
  if (!d.converged)
    return tag + ": no convergence within " + std::to_string(cfg.max_iterations) +
           " iterations";
  if (d.iterations > cfg.max_iterations) return tag + ": iteration overrun";
  for (std::size_t i = 1; i < d.objective_history.size(); ++i)
    if (d.objective_history[i] <
        d.objective_history[i - 1] -
            1e-9 * (1.0 + std::abs(d.objective_history[i - 1])))
      return tag + ": objective decreased at iteration " + std::to_string(i) +
             " (" + num(d.objective_history[i - 1]) + " -> " +
             num(d.objective_history[i]) + ")";
  const double bound =
      cfg.objective == Objective::cmc_top ? d.final_xi + cfg.epsilon : cfg.epsilon;
  if (d.final_violation > bound + 1e-12)
    return tag + ": final violation " + num(d.final_violation) + " above " +
           num(bound);
  return "";
}

std::string criterion_cutting_plane() {
  std::mt19937_64 rng(4242);
  int count = 0;
  for (const std::size_t m : {8, 14, 20})
    for (const std::size_t T : {2, 4})
      for (const double nu : {50.0, 300.0})
        for (const Objective o : {Objective::cmc_top, Objective::cmc_triplet}) {
          DistanceTensor tensor = random_tensor(m, T, rng, count % 5 == 0);
          TrainingConfig cfg;
          cfg.objective = o;
          cfg.nu = nu;
          cfg.k = std::min<std::size_t>(5, m - 1);
          const EnsembleModel model = train(tensor, cfg);
          const std::string err = check_training_contract(
              model, cfg, "instance " + std::to_string(count) + " (" +
                              objective_name(o) + ", m=" + std::to_string(m) +
                              ", nu=" + num(nu) + ")");
          if (!err.empty()) return err;
          ++count;
        }
  return "";
}

// ---------------------------------------------------------------------------
// shared scaffolding for the synthetic end-to-end criteria

struct SplitRun {
  DistanceTensor train_tensor;
  DistanceTensor test_tensor;
};

std::vector<SplitRun> build_split_tensors(const Dataset& ds,
                                          const std::vector<Split>& splits,
                                          const std::vector<MetricSpec>& specs,
                                          std::uint64_t seed) {
  std::vector<SplitRun> out;
  out.reserve(splits.size());
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const MetricBank bank = build_metric_bank(ds, splits[s].train_ids, specs,
                                              substream_seed(seed, 0x300 + s), 2);
    out.push_back({build_distance_tensor(bank.pointers(), ds, splits[s].train_ids, 2),
                   build_distance_tensor(bank.pointers(), ds, splits[s].test_ids, 2)});
  }
  return out;
}

double rank1(const MatrixRM& d) { return cmc_curve(d).rates.at(0); }

// ---------------------------------------------------------------------------
// 4. oracle-channel recovery

std::string criterion_recovery() {
  SynthConfig sc;
  sc.m = 120;
  sc.seed = 606;
  sc.channels.resize(4);
  sc.channels[0].kind = SynthChannelSpec::Kind::oracle;
  for (std::size_t c = 1; c < 4; ++c)
    sc.channels[c].kind = SynthChannelSpec::Kind::noise;
  const Dataset ds = synth_generate(sc);
  const std::vector<Split> splits = generate_splits(ds, 10, sc.seed);

  std::vector<MetricSpec> specs;
  for (int c = 0; c < 4; ++c)
    specs.push_back(parse_metric_spec("c" + std::to_string(c) + "/euclid"));
  const std::vector<SplitRun> runs = build_split_tensors(ds, splits, specs, sc.seed);

  for (const Objective o : {Objective::cmc_top, Objective::cmc_triplet}) {
    TrainingConfig cfg;
    cfg.objective = o;
    cfg.k = 10;
    cfg.nu = o == Objective::cmc_top ? 300.0 : 3000.0;
    double mean_rank1 = 0.0;
    for (std::size_t s = 0; s < runs.size(); ++s) {
      const EnsembleModel model = train(runs[s].train_tensor, cfg);
      const std::string tag =
          objective_name(o) + " split " + std::to_string(s);
      const std::string err = check_training_contract(model, cfg, tag);
      if (!err.empty()) return err;
      double sum = 0.0;
      for (double v : model.weights) sum += v;
      if (!(sum > 0.0)) return tag + ": zero weight vector";
      const double mass = model.weights[0] / sum;
      if (mass < 0.9)
        return tag + ": oracle channel holds only " + num(100.0 * mass) +
               "% of the weight mass";
      mean_rank1 += rank1(ensemble_distance_matrix(model.weights, runs[s].test_tensor));
    }
    mean_rank1 /= static_cast<double>(runs.size());
    if (mean_rank1 != 1.0)
      return objective_name(o) + ": mean test rank-1 " + num(mean_rank1) +
             " instead of 1";
  }
  return "";
}

// ---------------------------------------------------------------------------
// 5. learned ensemble vs uniform baseline on complementary partial channels

std::string criterion_baseline() {
  // two grouped channels with shifted pairings: each alone cannot tell the
  // two ids of a pair apart (rank-1 near 0.5), but no pair is confusable in
  // both channels, so a weighted combination separates everything
  SynthConfig sc;
  sc.m = 60;
  sc.seed = 707;
  sc.channels.resize(4);
  sc.channels[0].kind = SynthChannelSpec::Kind::grouped;
  sc.channels[0].group = 2;
  sc.channels[1].kind = SynthChannelSpec::Kind::grouped;
  sc.channels[1].group = 2;
  sc.channels[2].kind = SynthChannelSpec::Kind::noise;
  sc.channels[2].scale = 30.0;
  sc.channels[3].kind = SynthChannelSpec::Kind::noise;
  sc.channels[3].scale = 30.0;
  const Dataset ds = synth_generate(sc);
  const std::vector<Split> splits = generate_splits(ds, 10, sc.seed);

  std::vector<MetricSpec> specs;
  for (int c = 0; c < 4; ++c)
    specs.push_back(parse_metric_spec("c" + std::to_string(c) + "/euclid"));
  const std::vector<SplitRun> runs = build_split_tensors(ds, splits, specs, sc.seed);

  // design sanity on the full gallery, where every id's pair partner is
  // present: each grouped channel alone sits between floor and ceiling
  {
    std::vector<std::string> all_ids;
    for (const auto& id : ds.ids()) all_ids.push_back(id);
    const MetricBank bank = build_metric_bank(ds, all_ids, specs,
                                              substream_seed(sc.seed, 0x2ff), 2);
    const DistanceTensor full = build_distance_tensor(bank.pointers(), ds, all_ids, 2);
    const double single0 =
        rank1(ensemble_distance_matrix(std::vector<double>{1, 0, 0, 0}, full));
    const double single1 =
        rank1(ensemble_distance_matrix(std::vector<double>{0, 1, 0, 0}, full));
    if (single0 < 0.3 || single0 > 0.7)
      return "channel c0 alone gives rank-1 " + num(single0) + ", outside [0.3, 0.7]";
    if (single1 < 0.3 || single1 > 0.7)
      return "channel c1 alone gives rank-1 " + num(single1) + ", outside [0.3, 0.7]";
  }

  double uniform = 0.0, top = 0.0, triplet = 0.0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const DistanceTensor& test = runs[s].test_tensor;
    uniform += rank1(uniform_baseline_matrix(test));

    for (const Objective o : {Objective::cmc_top, Objective::cmc_triplet}) {
      TrainingConfig cfg;
      cfg.objective = o;
      cfg.k = 10;
      cfg.nu = o == Objective::cmc_top ? 300.0 : 3000.0;
      const EnsembleModel model = train(runs[s].train_tensor, cfg);
      const std::string err = check_training_contract(
          model, cfg, objective_name(o) + " split " + std::to_string(s));
      if (!err.empty()) return err;
      const double r = rank1(ensemble_distance_matrix(model.weights, test));
      (o == Objective::cmc_top ? top : triplet) += r;
    }
  }
  const double n = static_cast<double>(runs.size());
  uniform /= n;
  top /= n;
  triplet /= n;

  if (top < uniform)
    return "learned rank-1 " + num(top) + " below the uniform baseline " + num(uniform);
  if (top < triplet - 0.02)
    return "cmc_top rank-1 " + num(top) + " more than 2 points below cmc_triplet " +
           num(triplet);
  return "";
}

// ---------------------------------------------------------------------------
// 6. analytic KISSME check

std::string criterion_kissme() {
  using Pair = std::pair<Eigen::VectorXd, Eigen::VectorXd>;
  std::mt19937_64 rng(1905);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t N = 100000;

  {  // 1-D: var(similar diff) = 0.25, var(dissimilar diff) = 4 -> M = 3.75
    std::vector<Pair> sim(N), dis(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double xs = gauss(rng), xd = gauss(rng);
      sim[i] = {Eigen::VectorXd::Constant(1, xs),
                Eigen::VectorXd::Constant(1, xs + 0.5 * gauss(rng))};
      dis[i] = {Eigen::VectorXd::Constant(1, xd),
                Eigen::VectorXd::Constant(1, xd + 2.0 * gauss(rng))};
    }
    const double fitted = kissme_fit(sim, dis).m_matrix(0, 0);
    if (std::abs(fitted - 3.75) > 0.05 * 3.75)
      return "1-D fit " + num(fitted) + " is not within 5% of 3.75";
  }

  {  // multivariate, checked against an independent dense solve
    const std::size_t d = 4;
    const auto random_basis = [&]() -> Eigen::MatrixXd {
      Eigen::MatrixXd A(d, d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) A(i, j) = gauss(rng);
      Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
      return q;
    };
    const Eigen::MatrixXd qs = random_basis(), qd = random_basis();
    Eigen::VectorXd es(d), ed(d);
    es << 0.2, 0.6, 1.0, 2.5;  // similar diffs tighter in some directions only
    ed << 0.5, 0.4, 2.0, 4.0;
    const Eigen::MatrixXd rs = qs * es.cwiseSqrt().asDiagonal();
    const Eigen::MatrixXd rd = qd * ed.cwiseSqrt().asDiagonal();

    std::vector<Pair> sim(N), dis(N);
    Eigen::MatrixXd ds_acc = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd dd_acc = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd z(d), x(d);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < d; ++j) z(j) = gauss(rng);
      for (std::size_t j = 0; j < d; ++j) x(j) = gauss(rng);
      const Eigen::VectorXd diff_s = rs * z;
      sim[i] = {x, x - diff_s};
      ds_acc += diff_s * diff_s.transpose();
      for (std::size_t j = 0; j < d; ++j) z(j) = gauss(rng);
      for (std::size_t j = 0; j < d; ++j) x(j) = gauss(rng);
      const Eigen::VectorXd diff_d = rd * z;
      dis[i] = {x, x - diff_d};
      dd_acc += diff_d * diff_d.transpose();
    }
    const Eigen::MatrixXd cov_s = ds_acc / static_cast<double>(N);
    const Eigen::MatrixXd cov_d = dd_acc / static_cast<double>(N);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd diff =
        cov_s.llt().solve(eye) - cov_d.llt().solve(eye);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(0.5 * (diff + diff.transpose()));
    const Eigen::MatrixXd ref = es2.eigenvectors() *
                                es2.eigenvalues().cwiseMax(0.0).asDiagonal() *
                                es2.eigenvectors().transpose();

    const Eigen::MatrixXd fitted = kissme_fit(sim, dis).m_matrix;
    const double rel = (fitted - ref).norm() / ref.norm();
    if (rel > 0.05)
      return "multivariate fit differs from the dense reference by " +
             num(100.0 * rel) + "% Frobenius";
  }
  return "";
}

// ---------------------------------------------------------------------------
// 7. kLFDA residuals and separation

std::string criterion_klfda() {
  std::mt19937_64 rng(333);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // residuals on fitted directions across kernels and sizes
  struct Toy {
    std::size_t classes, per_class, dim;
    KernelKind kind;
    double sigma2;
    std::size_t r;
  };
  const Toy toys[] = {
      {3, 8, 2, KernelKind::gauss_rbf, 16.0, 0},
      {5, 6, 3, KernelKind::chi2_rbf, 2.0, 4},
      {4, 5, 2, KernelKind::gauss_rbf, 4.0, 2},
  };
  for (const Toy& toy : toys) {
    const std::size_t n = toy.classes * toy.per_class;
    Eigen::MatrixXd X(n, toy.dim);
    std::vector<int> labels(n);
    for (std::size_t c = 0; c < toy.classes; ++c)
      for (std::size_t i = 0; i < toy.per_class; ++i) {
        const std::size_t row = c * toy.per_class + i;
        labels[row] = static_cast<int>(c);
        for (std::size_t j = 0; j < toy.dim; ++j) {
          const double center = 6.0 * static_cast<double>((c + j) % toy.classes);
          double v = center + 0.5 * gauss(rng);
          if (toy.kind == KernelKind::chi2_rbf) v = std::abs(v);
          X(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = v;
        }
      }
    KlfdaConfig cfg;
    cfg.kernel.kind = toy.kind;
    cfg.kernel.sigma2 = toy.sigma2;
    cfg.r = toy.r;
    const KlfdaModel model = klfda_fit(X, labels, cfg);
    if (model.max_eigen_residual > 1e-6)
      return "eigen residual " + num(model.max_eigen_residual) + " above 1e-6";
  }

  // separable toy re-identification through the bank
  SynthConfig sc;
  sc.m = 20;
  sc.seed = 909;
  sc.channels.resize(1);
  sc.channels[0].kind = SynthChannelSpec::Kind::oracle;
  const Dataset ds = synth_generate(sc);
  const std::vector<Split> splits = generate_splits(ds, 3, sc.seed);
  const std::vector<MetricSpec> specs{parse_metric_spec("c0/klfda/gauss-q0.5")};
  const std::vector<SplitRun> runs = build_split_tensors(ds, splits, specs, sc.seed);
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const double r =
        rank1(ensemble_distance_matrix(std::vector<double>{1.0}, runs[s].test_tensor));
    if (r != 1.0)
      return "split " + std::to_string(s) + ": klfda rank-1 " + num(r) +
             " on the separable toy";
  }
  return "";
}

// ---------------------------------------------------------------------------
// 8. CMC curve properties on random matrices

std::string criterion_cmc() {
  std::mt19937_64 rng(818);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> q(0, 3);

  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t probes = 1 + rng() % 10;
    const bool square = rep % 4 != 0;
    const std::size_t gallery = square ? probes : 1 + rng() % 10;
    MatrixRM d(static_cast<Eigen::Index>(probes), static_cast<Eigen::Index>(gallery));
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        d(i, j) = rep % 3 == 0 ? static_cast<double>(q(rng)) : u(rng);
    std::vector<std::size_t> match(probes);
    for (std::size_t i = 0; i < probes; ++i)
      match[i] = square ? i : rng() % gallery;

    const CmcCurve got = square ? cmc_curve(d) : cmc_curve(d, match);

    // brute-force per-probe rank counts
    std::vector<std::size_t> counts(gallery, 0);
    for (std::size_t i = 0; i < probes; ++i) {
      const double dm = d(static_cast<Eigen::Index>(i),
                          static_cast<Eigen::Index>(match[i]));
      std::size_t rank = 1;
      for (std::size_t j = 0; j < gallery; ++j) {
        if (j == match[i]) continue;
        const double dj = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (dj < dm || (dj == dm && j < match[i])) ++rank;
      }
      ++counts[rank - 1];
    }
    if (got.rates.size() != gallery || got.num_probes != probes)
      return "rep " + std::to_string(rep) + ": curve shape mismatch";
    std::size_t cum = 0;
    double prev = -1.0;
    for (std::size_t r = 0; r < gallery; ++r) {
      cum += counts[r];
      const double want = static_cast<double>(cum) / static_cast<double>(probes);
      if (got.rates[r] != want)
        return "rep " + std::to_string(rep) + ": rate at rank " +
               std::to_string(r + 1) + " is " + num(got.rates[r]) + ", expected " +
               num(want);
      if (got.rates[r] < prev)
        return "rep " + std::to_string(rep) + ": curve decreases at rank " +
               std::to_string(r + 1);
      prev = got.rates[r];
    }
    if (got.rates.back() != 1.0)
      return "rep " + std::to_string(rep) + ": terminal value " +
             num(got.rates.back());
  }
  return "";
}

// ---------------------------------------------------------------------------
// 9. end-to-end determinism

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), root).string()] = read_text_file(entry.path());
  return out;
}

std::string criterion_determinism() {
  unsetenv("MER_CACHE_DIR");
  const fs::path base = fs::temp_directory_path() / "mer_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);

  const fs::path cfg_path = base / "exp.ini";
  atomic_write_file(cfg_path,
                    "[experiment]\n"
                    "seed = 17\n"
                    "splits = 3\n"
                    "objective = cmc_top\n"
                    "k = 3\n"
                    "nu_grid = 120,260\n"
                    "cv_folds = 2\n"
                    "ranks = 1,2,5\n"
                    "[synth]\n"
                    "m = 16\n"
                    "channel.0 = oracle dim=4\n"
                    "channel.1 = noise dim=3\n"
                    "[bank]\n"
                    "metric.0 = c0/euclid\n"
                    "metric.1 = c0/kissme/pca3\n"
                    "metric.2 = c0/klfda/gauss-q0.5-r4\n"
                    "metric.3 = c1/euclid\n");
  const ExperimentConfig cfg = load_config(cfg_path);

  for (const char* run : {"a", "b"}) {
    const RunPaths paths = make_run_paths(base / run);
    StdoutSilencer quiet;
    if (cmd_synth(cfg, paths) != 0) return std::string(run) + ": synth failed";
    if (cmd_train(cfg, paths) != 0) return std::string(run) + ": train failed";
    if (cmd_eval(cfg, paths) != 0) return std::string(run) + ": eval failed";
  }

  const auto ta = read_tree(base / "a");
  const auto tb = read_tree(base / "b");
  if (ta.size() != tb.size())
    return "run trees hold " + std::to_string(ta.size()) + " vs " +
           std::to_string(tb.size()) + " files";
  for (const auto& [rel, content] : ta) {
    const auto it = tb.find(rel);
    if (it == tb.end()) return "file " + rel + " missing from the second run";
    if (it->second != content) return "file " + rel + " differs between runs";
  }
  if (ta.find("eval/report.csv") == ta.end()) return "no report was written";
  return "";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::string (*fn)();
    double budget_seconds;  // 0 = no stated budget
  };
  const Criterion criteria[] = {
      {"separation-oracle exactness", criterion_oracles, 120.0},
      {"working-set qp correctness", criterion_qp, 60.0},
      {"cutting-plane contract", criterion_cutting_plane, 0.0},
      {"oracle-channel recovery", criterion_recovery, 300.0},
      {"learned ensemble vs uniform baseline", criterion_baseline, 0.0},
      {"kissme analytic solution", criterion_kissme, 0.0},
      {"klfda residuals and separation", criterion_klfda, 0.0},
      {"cmc curve properties", criterion_cmc, 0.0},
      {"end-to-end determinism", criterion_determinism, 0.0},
  };

  int rc = 0;
  std::size_t index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    std::string err;
    try {
      err = c.fn();
    } catch (const std::exception& e) {
      err = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (err.empty() && c.budget_seconds > 0.0 && secs > c.budget_seconds)
      err = "exceeded the " + num(c.budget_seconds) + "s budget";
    if (err.empty()) {
      std::printf("[PASS] %zu %s (%.1fs)\n", index, c.name, secs);
    } else {
      std::printf("[FAIL] %zu %s (%.1fs): %s\n", index, c.name, secs, err.c_str());
      rc = 1;
    }
    std::fflush(stdout);
  }
  return rc;
}
