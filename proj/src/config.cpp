#include "mer/config.hpp"

#include <algorithm>
#include <map>

#include "mer/util.hpp"

namespace mer {

namespace {

struct IniEntry {
  std::string value;
  std::string context;  // file:line for error messages
  bool used = false;
};

// section -> key -> entry; strict single assignment
using IniData = std::map<std::string, std::map<std::string, IniEntry>>;

IniData parse_ini(const std::filesystem::path& path) {
  IniData data;
  const std::vector<std::string> lines = split(read_text_file(path), '\n');
  std::string section;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string ctx = path.string() + ":" + std::to_string(li + 1);
    std::string line = lines[li];
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ctx + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw Error(ctx + ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw Error(ctx + ": expected key = value");
    if (section.empty()) throw Error(ctx + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ctx + ": empty key");
    auto& slot = data[section][key];
    if (!slot.context.empty())
      throw Error(ctx + ": duplicate key '" + key + "' (first at " + slot.context + ")");
    slot.value = trim(line.substr(eq + 1));
    slot.context = ctx;
  }
  return data;
}

SynthChannelSpec parse_channel_spec(const std::string& value, const std::string& name,
                                    const std::string& ctx) {
  SynthChannelSpec ch;
  ch.name = name;
  std::vector<std::string> toks;
  for (const auto& t : split(value, ' '))
    if (!trim(t).empty()) toks.push_back(trim(t));
  if (toks.empty()) throw Error(ctx + ": empty channel spec");
  if (toks[0] == "oracle")
    ch.kind = SynthChannelSpec::Kind::oracle;
  else if (toks[0] == "noise")
    ch.kind = SynthChannelSpec::Kind::noise;
  else if (toks[0] == "partial")
    ch.kind = SynthChannelSpec::Kind::partial;
  else if (toks[0] == "grouped")
    ch.kind = SynthChannelSpec::Kind::grouped;
  else
    throw Error(ctx + ": unknown channel kind '" + toks[0] +
                "' (expected oracle, noise, partial or grouped)");
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const auto kv = split(toks[i], '=');
    if (kv.size() != 2) throw Error(ctx + ": expected key=value, got '" + toks[i] + "'");
    const std::string& key = kv[0];
    if (key == "dim")
      ch.dim = static_cast<std::size_t>(parse_u64(kv[1], ctx));
    else if (key == "margin")
      ch.margin = parse_double(kv[1], ctx);
    else if (key == "delta")
      ch.delta = parse_double(kv[1], ctx);
    else if (key == "scale")
      ch.scale = parse_double(kv[1], ctx);
    else if (key == "coverage")
      ch.coverage = parse_double(kv[1], ctx);
    else if (key == "group")
      ch.group = static_cast<std::size_t>(parse_u64(kv[1], ctx));
    else
      throw Error(ctx + ": unknown channel option '" + key + "'");
  }
  return ch;
}

std::string channel_spec_text(const SynthChannelSpec& ch) {
  std::string s;
  switch (ch.kind) {
    case SynthChannelSpec::Kind::oracle: s = "oracle"; break;
    case SynthChannelSpec::Kind::noise: s = "noise"; break;
    case SynthChannelSpec::Kind::partial: s = "partial"; break;
    case SynthChannelSpec::Kind::grouped: s = "grouped"; break;
  }
  s += " dim=" + std::to_string(ch.dim);
  if (ch.kind != SynthChannelSpec::Kind::noise) {
    s += " margin=" + format_double(ch.margin);
    s += " delta=" + format_double(ch.delta);
  }
  s += " scale=" + format_double(ch.scale);
  if (ch.kind == SynthChannelSpec::Kind::partial)
    s += " coverage=" + format_double(ch.coverage);
  if (ch.kind == SynthChannelSpec::Kind::grouped)
    s += " group=" + std::to_string(ch.group);
  return s;
}

}  // namespace

TrainingConfig ExperimentConfig::training_config() const {
  TrainingConfig t;
  t.objective = objective;
  t.nu = nu;
  t.k = k;
  t.epsilon = epsilon;
  t.max_iterations = max_iterations;
  return t;
}

void ExperimentConfig::validate() const {
  if (splits == 0) throw Error("config: splits must be >= 1");
  if (k == 0) throw Error("config: k must be >= 1");
  if (!(epsilon > 0.0)) throw Error("config: epsilon must be positive");
  if (max_iterations == 0) throw Error("config: max_iterations must be >= 1");
  if (!(nu > 0.0)) throw Error("config: nu must be positive");
  if (nu_grid_mode == NuGridMode::list && nu_grid.empty())
    throw Error("config: nu_grid list is empty");
  for (double v : nu_grid)
    if (!(v > 0.0)) throw Error("config: nu_grid values must be positive");
  if (cv_folds < 2) throw Error("config: cv_folds must be >= 2");
  if (ranks.empty()) throw Error("config: ranks must not be empty");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] == 0) throw Error("config: ranks are 1-based");
    if (i > 0 && ranks[i] <= ranks[i - 1])
      throw Error("config: ranks must be strictly increasing");
  }
  if (jobs == 0) throw Error("config: jobs must be >= 1");
  if (feature_files.empty() == !synth.has_value())
    throw Error("config: exactly one of [data] features and [synth] is required");
  if (bank.empty()) throw Error("config: [bank] needs at least one metric");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  IniData data = parse_ini(path);
  ExperimentConfig cfg;
  cfg.ranks.clear();

  const auto lookup = [&](const std::string& section,
                          const std::string& key) -> IniEntry* {
    auto sit = data.find(section);
    if (sit == data.end()) return nullptr;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return nullptr;
    kit->second.used = true;
    return &kit->second;
  };

  if (const auto* e = lookup("experiment", "seed"))
    cfg.seed = parse_u64(e->value, e->context);
  if (const auto* e = lookup("experiment", "splits"))
    cfg.splits = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (const auto* e = lookup("experiment", "objective")) {
    try {
      cfg.objective = objective_from_name(e->value);
    } catch (const Error& err) {
      throw Error(e->context + ": " + err.what());
    }
  }
  if (const auto* e = lookup("experiment", "k"))
    cfg.k = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (const auto* e = lookup("experiment", "epsilon"))
    cfg.epsilon = parse_double(e->value, e->context);
  if (const auto* e = lookup("experiment", "max_iterations"))
    cfg.max_iterations = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (const auto* e = lookup("experiment", "nu"))
    cfg.nu = parse_double(e->value, e->context);
  if (const auto* e = lookup("experiment", "nu_grid")) {
    if (e->value == "none") {
      cfg.nu_grid_mode = NuGridMode::fixed;
    } else if (e->value == "default") {
      cfg.nu_grid_mode = NuGridMode::defaults;
    } else {
      cfg.nu_grid_mode = NuGridMode::list;
      for (const auto& tok : split(e->value, ','))
        cfg.nu_grid.push_back(parse_double(tok, e->context));
    }
  }
  if (const auto* e = lookup("experiment", "cv_folds"))
    cfg.cv_folds = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (const auto* e = lookup("experiment", "ranks")) {
    for (const auto& tok : split(e->value, ','))
      cfg.ranks.push_back(static_cast<std::size_t>(parse_u64(tok, e->context)));
  }
  if (const auto* e = lookup("experiment", "train_count"))
    cfg.train_count = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (const auto* e = lookup("experiment", "test_count"))
    cfg.test_count = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (const auto* e = lookup("experiment", "jobs"))
    cfg.jobs = static_cast<std::size_t>(parse_u64(e->value, e->context));
  if (cfg.ranks.empty()) cfg.ranks = {1, 2, 5, 10, 20, 50, 100};

  if (const auto* e = lookup("data", "features")) {
    for (const auto& tok : split(e->value, ',')) {
      const std::string p = trim(tok);
      if (p.empty()) throw Error(e->context + ": empty feature file path");
      cfg.feature_files.emplace_back(p);
    }
  }

  if (data.count("synth")) {
    SynthConfig sc;
    sc.seed = cfg.seed;
    if (const auto* e = lookup("synth", "m"))
      sc.m = static_cast<std::size_t>(parse_u64(e->value, e->context));
    if (const auto* e = lookup("synth", "seed"))
      sc.seed = parse_u64(e->value, e->context);
    // channel.N keys, contiguous from 0
    for (std::size_t i = 0;; ++i) {
      const auto* e = lookup("synth", "channel." + std::to_string(i));
      if (!e) break;
      sc.channels.push_back(
          parse_channel_spec(e->value, "c" + std::to_string(i), e->context));
    }
    if (sc.channels.empty())
      throw Error("config: [synth] needs channel.0, channel.1, ... entries");
    cfg.synth = std::move(sc);
  }

  if (data.count("bank")) {
    for (std::size_t i = 0;; ++i) {
      const auto* e = lookup("bank", "metric." + std::to_string(i));
      if (!e) break;
      try {
        cfg.bank.push_back(parse_metric_spec(e->value));
      } catch (const Error& err) {
        throw Error(e->context + ": " + err.what());
      }
    }
  }

  for (const auto& [section, keys] : data) {
    if (section != "experiment" && section != "data" && section != "synth" &&
        section != "bank")
      throw Error(path.string() + ": unknown section [" + section + "]");
    for (const auto& [key, entry] : keys)
      if (!entry.used)
        throw Error(entry.context + ": unknown key '" + key + "' in [" + section + "]");
  }

  cfg.validate();
  return cfg;
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::string s = "[experiment]\n";
  s += "seed = " + std::to_string(cfg.seed) + "\n";
  s += "splits = " + std::to_string(cfg.splits) + "\n";
  s += "objective = " + objective_name(cfg.objective) + "\n";
  s += "k = " + std::to_string(cfg.k) + "\n";
  s += "epsilon = " + format_double(cfg.epsilon) + "\n";
  s += "max_iterations = " + std::to_string(cfg.max_iterations) + "\n";
  s += "nu = " + format_double(cfg.nu) + "\n";
  switch (cfg.nu_grid_mode) {
    case NuGridMode::fixed:
      s += "nu_grid = none\n";
      break;
    case NuGridMode::defaults:
      s += "nu_grid = default\n";
      break;
    case NuGridMode::list: {
      s += "nu_grid = ";
      for (std::size_t i = 0; i < cfg.nu_grid.size(); ++i)
        s += (i ? "," : "") + format_double(cfg.nu_grid[i]);
      s += "\n";
      break;
    }
  }
  s += "cv_folds = " + std::to_string(cfg.cv_folds) + "\n";
  s += "ranks = ";
  for (std::size_t i = 0; i < cfg.ranks.size(); ++i)
    s += (i ? "," : "") + std::to_string(cfg.ranks[i]);
  s += "\n";
  s += "train_count = " + std::to_string(cfg.train_count) + "\n";
  s += "test_count = " + std::to_string(cfg.test_count) + "\n";
  s += "jobs = " + std::to_string(cfg.jobs) + "\n";

  if (!cfg.feature_files.empty()) {
    s += "\n[data]\nfeatures = ";
    for (std::size_t i = 0; i < cfg.feature_files.size(); ++i)
      s += (i ? "," : "") + cfg.feature_files[i].string();
    s += "\n";
  }
  if (cfg.synth) {
    s += "\n[synth]\n";
    s += "m = " + std::to_string(cfg.synth->m) + "\n";
    s += "seed = " + std::to_string(cfg.synth->seed) + "\n";
    for (std::size_t i = 0; i < cfg.synth->channels.size(); ++i)
      s += "channel." + std::to_string(i) + " = " +
           channel_spec_text(cfg.synth->channels[i]) + "\n";
  }
  if (!cfg.bank.empty()) {
    s += "\n[bank]\n";
    for (std::size_t i = 0; i < cfg.bank.size(); ++i)
      s += "metric." + std::to_string(i) + " = " + cfg.bank[i].label + "\n";
  }
  return s;
}

}  // namespace mer
