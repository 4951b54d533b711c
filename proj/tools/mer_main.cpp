#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "mer/runner.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string out = "out";
  // optional overrides
  std::string objective;
  std::string nu_grid;
  std::uint64_t seed = 0;
  std::size_t splits = 0;
  std::size_t jobs = 0;
  double nu = 0.0;
  bool has_seed = false, has_splits = false, has_jobs = false, has_nu = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config) {
  auto* copt = cmd->add_option("-c,--config", o.config, "experiment config (INI)");
  if (needs_config) copt->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "output directory (default: out)");
  cmd->add_option("--seed", o.seed, "override [experiment] seed")
      ->each([&](const std::string&) { o.has_seed = true; });
  cmd->add_option("--splits", o.splits, "override split count")
      ->each([&](const std::string&) { o.has_splits = true; });
  cmd->add_option("--jobs", o.jobs, "override worker thread count")
      ->each([&](const std::string&) { o.has_jobs = true; });
  cmd->add_option("--nu", o.nu, "override nu (disables the grid)")
      ->each([&](const std::string&) { o.has_nu = true; });
  cmd->add_option("--objective", o.objective,
                  "override objective (cmc_top|cmc_triplet|uniform)");
}

mer::ExperimentConfig load_with_overrides(const CommonOpts& o) {
  mer::ExperimentConfig cfg = mer::load_config(o.config);
  if (o.has_seed) {
    cfg.seed = o.seed;
    if (cfg.synth) cfg.synth->seed = o.seed;
  }
  if (o.has_splits) cfg.splits = o.splits;
  if (o.has_jobs) cfg.jobs = o.jobs;
  if (o.has_nu) {
    cfg.nu = o.nu;
    cfg.nu_grid_mode = mer::NuGridMode::fixed;
  }
  if (!o.objective.empty()) cfg.objective = mer::objective_from_name(o.objective);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metric ensemble re-identification toolkit"};
  app.require_subcommand(1);

  CommonOpts synth_o, train_o, eval_o, report_o;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_o, true);
  auto* train = app.add_subcommand("train", "fit metric banks and ensembles");
  add_common(train, train_o, true);
  auto* eval = app.add_subcommand("eval", "score test splits and write reports");
  add_common(eval, eval_o, true);
  auto* report = app.add_subcommand("report", "print a written report");
  report->add_option("-o,--out", report_o.out, "output directory (default: out)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return mer::cmd_synth(load_with_overrides(synth_o),
                            mer::make_run_paths(synth_o.out));
    if (train->parsed())
      return mer::cmd_train(load_with_overrides(train_o),
                            mer::make_run_paths(train_o.out));
    if (eval->parsed())
      return mer::cmd_eval(load_with_overrides(eval_o),
                           mer::make_run_paths(eval_o.out));
    if (report->parsed()) return mer::cmd_report(mer::make_run_paths(report_o.out));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
