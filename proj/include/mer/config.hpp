#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mer/ensemble.hpp"
#include "mer/metric_bank.hpp"
#include "mer/synth.hpp"

namespace mer {

enum class NuGridMode { fixed, defaults, list };

struct ExperimentConfig {
  // [experiment]
  std::uint64_t seed = 42;
  std::size_t splits = 10;
  Objective objective = Objective::cmc_top;
  std::size_t k = 10;
  double epsilon = 1e-6;
  std::size_t max_iterations = 500;
  double nu = 100.0;
  NuGridMode nu_grid_mode = NuGridMode::fixed;
  std::vector<double> nu_grid;  // list mode only
  std::size_t cv_folds = 3;
  std::vector<std::size_t> ranks = {1, 2, 5, 10, 20, 50, 100};
  std::size_t train_count = 0;  // 0 = floor(m/2)
  std::size_t test_count = 0;   // 0 = remainder
  std::size_t jobs = 1;

  // [data] or [synth], mutually exclusive
  std::vector<std::filesystem::path> feature_files;
  std::optional<SynthConfig> synth;

  // [bank]
  std::vector<MetricSpec> bank;

  TrainingConfig training_config() const;
  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

// canonical text form; reparsing it yields the same configuration
std::string canonical_config(const ExperimentConfig& cfg);

}  // namespace mer
