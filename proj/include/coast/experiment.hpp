#pragma once

// End-to-end pipeline for one seed: data -> federated training -> every
// enabled assessment method -> report, plus offline re-assessment of
// persisted round logs.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coast/baselines.hpp"
#include "coast/config.hpp"
#include "coast/cross_round.hpp"
#include "coast/flengine.hpp"
#include "coast/model.hpp"
#include "coast/report.hpp"
#include "coast/synthdata.hpp"

namespace coast {

struct ClientData {
  std::vector<Dataset> clients;
  Dataset validation;
};

// Deterministic in (cfg, seed). The base pool holds train_samples +
// val_samples images; the tail is the clean validation set.
inline ClientData build_client_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto base = generate_base(seed, static_cast<std::size_t>(cfg.train_samples + cfg.val_samples), cfg.height,
                                  cfg.width, cfg.arch.classes);
  auto split = split_base(base, static_cast<std::size_t>(cfg.val_samples));
  ClientData data;
  data.validation = std::move(split.validation);
  for (int i = 1; i <= cfg.clients; ++i)
    data.clients.push_back(make_client_dataset(cfg.setting, split.train, i, cfg.clients, seed));
  return data;
}

inline void dump_client_data(const ClientData& data, const std::filesystem::path& dir) {
  ensure_directory(dir);
  for (std::size_t i = 0; i < data.clients.size(); ++i)
    write_dataset(dir / ("client_" + std::to_string(i + 1) + ".bin"), data.clients[i]);
  write_dataset(dir / "validation.bin", data.validation);
}

inline std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> echo;
  std::istringstream in(serialize_config(cfg, false));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    echo.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return echo;
}

struct AssessmentDiagnostics {
  std::vector<double> shapley_efficiency_gap;  // per round, when shapley ran
};

// Scores the logs with every method enabled in cfg. Validation data is only
// needed for shapley/loo.
inline Report assess_logs(const ExperimentConfig& cfg, std::span<const RoundLog> logs, const Dataset* validation,
                          std::uint64_t seed, AssessmentDiagnostics* diag = nullptr) {
  Report report;
  report.setting = std::string(to_string(cfg.setting));
  report.seed = seed;
  ExperimentConfig echo_cfg = cfg;
  echo_cfg.seed = seed;
  echo_cfg.seeds = 1;
  report.config_hash = config_hash(echo_cfg);
  report.config = config_echo(echo_cfg);
  const int n = static_cast<int>(logs.front().num_clients());
  report.ground_truth = ground_truth_ranking(n);

  std::optional<ValidationBaselines> vb;
  if (cfg.has_method(Method::shapley) || cfg.has_method(Method::loo)) {
    if (validation == nullptr) throw ConfigError("shapley/loo need a validation set");
    vb = assess_validation_baselines(logs, cfg.arch, *validation);
    if (diag) diag->shapley_efficiency_gap = vb->efficiency_gap;
  }
  for (Method m : cfg.methods) {
    switch (m) {
      case Method::coast:
        report.methods.push_back(evaluate(assess(logs, cfg.prune, cfg.valuation), report.ground_truth));
        break;
      case Method::cgsv: report.methods.push_back(evaluate(assess_cgsv(logs), report.ground_truth)); break;
      case Method::shapley: report.methods.push_back(evaluate(vb->shapley, report.ground_truth)); break;
      case Method::loo: report.methods.push_back(evaluate(vb->leave_one_out, report.ground_truth)); break;
    }
  }
  return report;
}

struct SeedRun {
  Report report;
  ExperimentRun run;
  ClientData data;
  std::vector<double> val_accuracy;  // [0] initial model, [t] after round t
  AssessmentDiagnostics diagnostics;
  double seconds = 0.0;
};

// One full experiment. With an output directory, writes
//   <dir>/logs/       round logs + manifest
//   <dir>/report.json, scores_*.csv
//   <dir>/training.csv  validation accuracy per round
//   <dir>/timing.json   wall-clock runtime (the only nondeterministic file)
inline SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  SeedRun result;
  result.data = build_client_data(cfg, seed);
  const auto initial = init_params(cfg.arch, seed);
  result.val_accuracy.push_back(accuracy(initial, cfg.arch, result.data.validation));
  result.run = run_experiment(initial, result.data.clients, cfg.rounds, cfg.round_setup(seed), [&](const RoundLog& log) {
    result.val_accuracy.push_back(accuracy(log.global_after, cfg.arch, result.data.validation));
  });
  result.report = assess_logs(cfg, result.run.logs, &result.data.validation, seed, &result.diagnostics);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (out_dir) {
    ExperimentConfig echo_cfg = cfg;
    echo_cfg.seed = seed;
    echo_cfg.seeds = 1;
    write_logs(*out_dir / "logs", result.run.logs, {seed, config_hash(echo_cfg), serialize_config(echo_cfg, false)});
    emit_report(result.report, *out_dir);
    std::string csv = "round,val_accuracy\n";
    for (std::size_t t = 0; t < result.val_accuracy.size(); ++t)
      csv += std::to_string(t) + "," + format_score(result.val_accuracy[t]) + "\n";
    write_file_text(*out_dir / "training.csv", csv);
    nlohmann::ordered_json timing;
    timing["seconds"] = result.seconds;
    write_file_text(*out_dir / "timing.json", timing.dump(2) + "\n");
  }
  return result;
}

// Seeds used by a multi-seed run: seed, seed + 1, ...
inline std::vector<std::uint64_t> seed_list(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < cfg.seeds; ++s) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(s));
  return seeds;
}

// Re-scores persisted logs. The experiment config stored in the manifest is
// the base; `overrides` (k, valuation, tail, methods, ...) are applied on top.
// Validation data for shapley/loo is regenerated from the stored config.
inline Report assess_log_dir(const std::filesystem::path& log_dir,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  auto set = replay(log_dir);
  ExperimentConfig cfg = set.meta.config_text.empty() ? ExperimentConfig{} : parse_config(set.meta.config_text);
  std::vector<std::string> errors;
  for (const auto& [k, v] : overrides) {
    const auto err = set_config_value(cfg, k, v);
    if (!err.empty()) errors.push_back(err);
  }
  if (!errors.empty()) {
    std::string msg = "invalid assess overrides:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  sync_derived(cfg);
  validate(cfg);
  std::optional<Dataset> validation;
  if (cfg.has_method(Method::shapley) || cfg.has_method(Method::loo))
    validation = build_client_data(cfg, set.meta.seed).validation;
  return assess_logs(cfg, set.logs, validation ? &*validation : nullptr, set.meta.seed);
}

}  // namespace coast
