#pragma once

#include <filesystem>
#include <string>

#include "mer/config.hpp"

namespace mer {

struct RunPaths {
  std::filesystem::path out;
  std::filesystem::path cache;
};

// cache defaults to <out>/cache, overridable with MER_CACHE_DIR
RunPaths make_run_paths(const std::filesystem::path& out);

// per-split trained ensemble as stored in split_NN/ensemble.txt
struct EnsembleManifest {
  std::string config_hash;
  std::size_t split_index = 0;
  Objective objective = Objective::cmc_top;
  std::size_t k = 0;
  double epsilon = 0.0;
  std::size_t max_iterations = 0;
  double nu = 0.0;
  std::string nu_source;  // fixed | cv | none
  std::size_t iterations = 0;
  bool converged = false;
  double final_xi = 0.0;
  double final_violation = 0.0;
  std::vector<std::string> labels;
  std::vector<double> weights;
};

void write_ensemble_manifest(const EnsembleManifest& m,
                             const std::filesystem::path& path);
EnsembleManifest read_ensemble_manifest(const std::filesystem::path& path);

// generates the configured synthetic dataset and writes features.csv
int cmd_synth(const ExperimentConfig& cfg, const RunPaths& paths);
// fits banks and ensembles for every split
int cmd_train(const ExperimentConfig& cfg, const RunPaths& paths);
// scores the test splits and writes eval/report.csv + eval/curve.csv
int cmd_eval(const ExperimentConfig& cfg, const RunPaths& paths);
// pretty-prints a previously written report
int cmd_report(const RunPaths& paths);

}  // namespace mer
