#include "mer/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "mer/evaluation.hpp"
#include "mer/util.hpp"

namespace mer {

namespace {

std::string split_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "split_%02zu", index);
  return buf;
}

Dataset resolve_dataset(const ExperimentConfig& cfg) {
  if (!cfg.feature_files.empty()) return load_dataset(cfg.feature_files);
  return synth_generate(*cfg.synth);
}

std::string config_hash(const ExperimentConfig& cfg, const Dataset& ds) {
  std::uint64_t h = fnv1a(canonical_config(cfg));
  const std::uint64_t dh = ds.content_hash();
  h = fnv1a(&dh, sizeof(dh), h);
  return hash_hex(h);
}

std::string tensor_cache_key(const Dataset& ds, const ExperimentConfig& cfg,
                             const Split& split,
                             const std::vector<std::string>& labels,
                             const std::vector<std::string>& ids,
                             const char* role) {
  std::uint64_t h = ds.content_hash();
  h = fnv1a(role, std::char_traits<char>::length(role), h);
  h = fnv1a(&split.seed, sizeof(split.seed), h);
  const std::uint64_t bank_seed = substream_seed(cfg.seed, 0x300 + split.index);
  h = fnv1a(&bank_seed, sizeof(bank_seed), h);
  for (const auto& l : labels) h = fnv1a(l + "\n", h);
  for (const auto& id : split.train_ids) h = fnv1a(id + ";", h);
  for (const auto& id : ids) h = fnv1a(id + "\n", h);
  return hash_hex(h);
}

DistanceTensor cached_tensor(const RunPaths& paths, const Dataset& ds,
                             const ExperimentConfig& cfg, const Split& split,
                             const MetricBank& bank,
                             const std::vector<std::string>& ids, const char* role,
                             std::size_t jobs, std::string& log) {
  const std::vector<std::string> labels = bank.labels();
  const std::string key = tensor_cache_key(ds, cfg, split, labels, ids, role);
  const std::filesystem::path path = paths.cache / ("tensor_" + key + ".bin");
  if (std::filesystem::exists(path)) {
    try {
      DistanceTensor t = read_tensor_cache(path, ids);
      if (t.metric_labels() == labels) {
        log += "tensor " + std::string(role) + " cache hit " + key + "\n";
        return t;
      }
      log += "tensor " + std::string(role) + " cache label mismatch " + key + "\n";
    } catch (const Error& e) {
      log += "tensor " + std::string(role) + " cache unreadable " + key + ": " +
             e.what() + "\n";
    }
  }
  DistanceTensor t = build_distance_tensor(bank.pointers(), ds, ids, jobs);
  write_tensor_cache(path, t);
  log += "tensor " + std::string(role) + " cache store " + key + "\n";
  return t;
}

}  // namespace

RunPaths make_run_paths(const std::filesystem::path& out) {
  RunPaths p;
  p.out = out;
  if (const char* env = std::getenv("MER_CACHE_DIR"))
    p.cache = env;
  else
    p.cache = out / "cache";
  return p;
}

void write_ensemble_manifest(const EnsembleManifest& m,
                             const std::filesystem::path& path) {
  if (m.labels.size() != m.weights.size())
    throw Error("ensemble manifest: label/weight count mismatch");
  std::string s = "mer-ensemble v1\n";
  s += "config_hash " + m.config_hash + "\n";
  s += "split " + std::to_string(m.split_index) + "\n";
  s += "objective " + objective_name(m.objective) + "\n";
  s += "k " + std::to_string(m.k) + "\n";
  s += "epsilon " + format_double(m.epsilon) + "\n";
  s += "max_iterations " + std::to_string(m.max_iterations) + "\n";
  s += "nu " + format_double(m.nu) + "\n";
  s += "nu_source " + m.nu_source + "\n";
  s += "iterations " + std::to_string(m.iterations) + "\n";
  s += "converged " + std::string(m.converged ? "1" : "0") + "\n";
  s += "final_xi " + format_double(m.final_xi) + "\n";
  s += "final_violation " + format_double(m.final_violation) + "\n";
  s += "metrics " + std::to_string(m.labels.size()) + "\n";
  for (std::size_t t = 0; t < m.labels.size(); ++t)
    s += "w " + m.labels[t] + " " + format_double(m.weights[t]) + "\n";
  atomic_write_file(path, s);
}

EnsembleManifest read_ensemble_manifest(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split(read_text_file(path), '\n');
  if (lines.empty() || trim(lines[0]) != "mer-ensemble v1")
    throw Error("ensemble manifest: unrecognized header in " + path.string());
  EnsembleManifest m;
  std::size_t declared = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string line = trim(lines[li]);
    if (line.empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(li + 1);
    const auto f = split(line, ' ');
    const std::string& key = f[0];
    if (key == "w") {
      if (f.size() != 3) throw Error(ctx + ": bad weight line");
      m.labels.push_back(f[1]);
      m.weights.push_back(parse_double(f[2], ctx));
      continue;
    }
    if (f.size() != 2) throw Error(ctx + ": expected key value");
    const std::string& v = f[1];
    if (key == "config_hash")
      m.config_hash = v;
    else if (key == "split")
      m.split_index = static_cast<std::size_t>(parse_u64(v, ctx));
    else if (key == "objective")
      m.objective = objective_from_name(v);
    else if (key == "k")
      m.k = static_cast<std::size_t>(parse_u64(v, ctx));
    else if (key == "epsilon")
      m.epsilon = parse_double(v, ctx);
    else if (key == "max_iterations")
      m.max_iterations = static_cast<std::size_t>(parse_u64(v, ctx));
    else if (key == "nu")
      m.nu = parse_double(v, ctx);
    else if (key == "nu_source")
      m.nu_source = v;
    else if (key == "iterations")
      m.iterations = static_cast<std::size_t>(parse_u64(v, ctx));
    else if (key == "converged")
      m.converged = v == "1";
    else if (key == "final_xi")
      m.final_xi = parse_double(v, ctx);
    else if (key == "final_violation")
      m.final_violation = parse_double(v, ctx);
    else if (key == "metrics")
      declared = static_cast<std::size_t>(parse_u64(v, ctx));
    else
      throw Error(ctx + ": unknown manifest key '" + key + "'");
  }
  if (m.labels.size() != declared)
    throw Error(path.string() + ": manifest declares " + std::to_string(declared) +
                " metrics but lists " + std::to_string(m.labels.size()));
  return m;
}

int cmd_synth(const ExperimentConfig& cfg, const RunPaths& paths) {
  if (!cfg.synth) throw Error("synth: the config has no [synth] section");
  const Dataset ds = synth_generate(*cfg.synth);
  std::filesystem::create_directories(paths.out);
  save_dataset(ds, paths.out / "features.csv");
  atomic_write_file(paths.out / "config_echo.ini", canonical_config(cfg));
  std::printf("wrote %s: %zu individuals, %zu channels\n",
              (paths.out / "features.csv").c_str(), ds.num_individuals(),
              ds.num_channels());
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const RunPaths& paths) {
  const Dataset ds = resolve_dataset(cfg);
  const std::vector<Split> splits = generate_splits(
      ds, cfg.splits, cfg.seed, SplitSpec{cfg.train_count, cfg.test_count});
  const std::string chash = config_hash(cfg, ds);

  std::filesystem::create_directories(paths.out);
  std::filesystem::create_directories(paths.cache);
  atomic_write_file(paths.out / "config_echo.ini", canonical_config(cfg));

  std::vector<std::string> logs(splits.size());
  std::vector<std::string> failures(splits.size());
  const std::size_t outer_jobs = std::min(cfg.jobs, splits.size());
  const std::size_t inner_jobs = outer_jobs > 1 ? 1 : cfg.jobs;

  parallel_for(splits.size(), outer_jobs, [&](std::size_t s) {
    const Split& split = splits[s];
    std::string& log = logs[s];
    try {
      const std::filesystem::path dir = paths.out / split_dir_name(s);
      std::filesystem::create_directories(dir);
      log += "split " + std::to_string(s) + ": train=" +
             std::to_string(split.train_ids.size()) + " test=" +
             std::to_string(split.test_ids.size()) + "\n";

      const MetricBank bank = build_metric_bank(
          ds, split.train_ids, cfg.bank, substream_seed(cfg.seed, 0x300 + s),
          inner_jobs);
      save_metric_bank(bank, dir / "bank");

      const DistanceTensor train_tensor = cached_tensor(
          paths, ds, cfg, split, bank, split.train_ids, "train", inner_jobs, log);

      EnsembleManifest man;
      man.config_hash = chash;
      man.split_index = s;
      man.objective = cfg.objective;
      man.k = cfg.k;
      man.epsilon = cfg.epsilon;
      man.max_iterations = cfg.max_iterations;
      man.labels = bank.labels();

      if (cfg.objective == Objective::uniform) {
        man.nu = cfg.nu;
        man.nu_source = "none";
        man.weights.assign(man.labels.size(),
                           1.0 / static_cast<double>(man.labels.size()));
        log += "uniform baseline, no training\n";
      } else {
        TrainingConfig tc = cfg.training_config();
        if (cfg.nu_grid_mode == NuGridMode::fixed) {
          man.nu_source = "fixed";
        } else {
          const std::vector<double> grid = cfg.nu_grid_mode == NuGridMode::defaults
                                               ? default_nu_grid(cfg.objective)
                                               : cfg.nu_grid;
          std::vector<CvEntry> table;
          const TensorBuilder builder = [&](const std::vector<std::string>& ids) {
            return train_tensor.slice(ids);
          };
          tc.nu = cross_validate_nu(builder, split.train_ids, grid, cfg.cv_folds,
                                    tc, split.seed, &table);
          man.nu_source = "cv";
          for (const auto& e : table)
            log += "cv nu=" + format_double(e.nu) +
                   " rank1=" + format_double(e.mean_rank1) + "\n";
        }
        man.nu = tc.nu;
        const EnsembleModel model = train(train_tensor, tc);
        man.iterations = model.diagnostics.iterations;
        man.converged = model.diagnostics.converged;
        man.final_xi = model.diagnostics.final_xi;
        man.final_violation = model.diagnostics.final_violation;
        man.weights = model.weights;
        log += "trained: nu=" + format_double(tc.nu) + " iterations=" +
               std::to_string(man.iterations) +
               (man.converged ? "" : " (iteration cap hit)") + "\n";
      }
      write_ensemble_manifest(man, dir / "ensemble.txt");

      cached_tensor(paths, ds, cfg, split, bank, split.test_ids, "test",
                    inner_jobs, log);
    } catch (const std::exception& e) {
      failures[s] = e.what();
      log += std::string("FAILED: ") + e.what() + "\n";
    }
  });

  std::string full_log;
  for (const auto& l : logs) full_log += l;
  atomic_write_file(paths.out / "run_log.txt", full_log);

  int rc = 0;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    if (!failures[s].empty()) {
      std::fprintf(stderr, "split %zu failed: %s\n", s, failures[s].c_str());
      rc = 1;
    }
  }
  if (rc == 0)
    std::printf("trained %zu splits into %s\n", splits.size(), paths.out.c_str());
  return rc;
}

int cmd_eval(const ExperimentConfig& cfg, const RunPaths& paths) {
  const Dataset ds = resolve_dataset(cfg);
  const std::vector<Split> splits = generate_splits(
      ds, cfg.splits, cfg.seed, SplitSpec{cfg.train_count, cfg.test_count});
  const std::string chash = config_hash(cfg, ds);

  std::vector<CmcCurve> curves(splits.size());
  std::vector<std::string> logs(splits.size());
  const std::size_t outer_jobs = std::min(cfg.jobs, splits.size());
  const std::size_t inner_jobs = outer_jobs > 1 ? 1 : cfg.jobs;

  parallel_for(splits.size(), outer_jobs, [&](std::size_t s) {
    const Split& split = splits[s];
    const std::filesystem::path dir = paths.out / split_dir_name(s);
    const EnsembleManifest man = read_ensemble_manifest(dir / "ensemble.txt");
    if (man.config_hash != chash)
      throw Error("artifacts in " + dir.string() +
                  " were trained with a different config (hash " + man.config_hash +
                  ", expected " + chash + ")");
    const MetricBank bank = load_metric_bank(dir / "bank");
    if (bank.labels() != man.labels)
      throw Error("bank in " + dir.string() + " does not match the ensemble manifest");

    const DistanceTensor test_tensor = cached_tensor(
        paths, ds, cfg, split, bank, split.test_ids, "test", inner_jobs, logs[s]);

    MatrixRM matrix;
    if (man.objective == Objective::uniform)
      matrix = uniform_baseline_matrix(test_tensor);
    else
      matrix = ensemble_distance_matrix(man.weights, test_tensor);
    curves[s] = cmc_curve(matrix);
  });

  const EvalReport rep =
      aggregate(objective_name(cfg.objective), std::move(curves), cfg.ranks);
  std::filesystem::create_directories(paths.out / "eval");
  write_report_csv(rep, paths.out / "eval" / "report.csv");
  write_curve_csv(rep, paths.out / "eval" / "curve.csv");

  for (std::size_t i = 0; i < rep.ranks.size(); ++i)
    std::printf("rank-%zu %.4f\n", rep.ranks[i], rep.mean_at_ranks[i]);
  return 0;
}

int cmd_report(const RunPaths& paths) {
  const ReportTable table = read_report_csv(paths.out / "eval" / "report.csv");
  std::printf("method: %s\n", table.method.c_str());
  for (const auto& h : table.header) std::printf("%10s", h.c_str());
  std::printf("\n");
  for (const auto& row : table.rows) {
    std::printf("%10.0f", row[0]);
    for (std::size_t c = 1; c < row.size(); ++c) std::printf("%10.4f", row[c]);
    std::printf("\n");
  }
  return 0;
}

}  // namespace mer
