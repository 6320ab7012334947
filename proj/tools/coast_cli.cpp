// coast: federated contribution-assessment experiments from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 configuration error,
// 3 runtime error (numeric/training/capability), 4 I/O or corrupt-log error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coast/coast.hpp"
#include "coast/oracle.hpp"

namespace fs = std::filesystem;
using namespace coast;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitIo = 4;

using Overrides = std::vector<std::pair<std::string, std::string>>;

Overrides parse_sets(const std::vector<std::string>& sets) {
  Overrides out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void print_report(const Report& r) {
  std::printf("setting %s  seed %llu  config %s\n", r.setting.c_str(), static_cast<unsigned long long>(r.seed),
              r.config_hash.c_str());
  for (const auto& m : r.methods) {
    std::printf("  %-8s rho %+.3f  ranking [", m.board.method.c_str(), m.rho);
    for (std::size_t i = 0; i < m.board.ranking.size(); ++i) std::printf("%s%d", i ? " " : "", m.board.ranking[i]);
    std::printf("]  totals [");
    for (std::size_t i = 0; i < m.board.totals.size(); ++i) std::printf("%s%.6g", i ? " " : "", m.board.totals[i]);
    std::printf("]\n");
  }
}

// One grid cell: a name and the overrides that define it.
struct Cell {
  std::string name;
  Overrides overrides;
};

std::vector<Cell> read_grid(const fs::path& path) {
  std::istringstream in(read_file_text(path));
  std::vector<Cell> cells;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    Cell cell;
    std::string word;
    while (words >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) throw ConfigError(path.string() + ": expected key=value, got '" + word + "'");
      cell.overrides.emplace_back(word.substr(0, eq), word.substr(eq + 1));
      cell.name += (cell.name.empty() ? "" : "_") + word.substr(0, eq) + "-" + word.substr(eq + 1);
    }
    if (!cell.overrides.empty()) cells.push_back(std::move(cell));
  }
  if (cells.empty()) throw ConfigError(path.string() + ": grid has no cells");
  return cells;
}

// Runs every seed of one configuration into `dir`, seeds spread over `jobs` workers.
std::vector<Report> run_cell(const ExperimentConfig& cfg, const fs::path& dir, const std::optional<fs::path>& dump) {
  const auto seeds = seed_list(cfg);
  std::vector<Report> reports(seeds.size());
  ExperimentConfig seed_cfg = cfg;
  const int workers = cfg.jobs;
  if (seeds.size() > 1) seed_cfg.jobs = 1;
  std::mutex print_mutex;
  parallel_for(seeds.size(), seeds.size() > 1 ? workers : 1, [&](std::size_t s) {
    const auto out = dir / ("seed_" + std::to_string(seeds[s]));
    auto result = run_seed(seed_cfg, seeds[s], out);
    if (dump) dump_client_data(result.data, *dump / ("seed_" + std::to_string(seeds[s])));
    std::lock_guard lock(print_mutex);
    std::printf("[%s] seed %llu done in %.1fs (final val acc %.3f)\n", to_string(cfg.setting).data(),
                static_cast<unsigned long long>(seeds[s]), result.seconds, result.val_accuracy.back());
    print_report(result.report);
    reports[s] = std::move(result.report);
  });
  const auto summary = summary_json(reports);
  write_file_text(dir / "summary.json", summary.dump(2) + "\n");
  return reports;
}

struct RunArgs {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> setting;
  std::vector<std::string> methods;
  std::vector<std::string> sets;
  std::optional<std::string> grid;
  std::optional<std::string> dump_data;
};

Overrides flag_overrides(const RunArgs& a) {
  Overrides o = parse_sets(a.sets);
  if (a.seed) o.emplace_back("seed", std::to_string(*a.seed));
  if (a.seeds) o.emplace_back("seeds", std::to_string(*a.seeds));
  if (a.out) o.emplace_back("out", *a.out);
  if (a.jobs) o.emplace_back("jobs", std::to_string(*a.jobs));
  if (a.setting) o.emplace_back("setting", *a.setting);
  if (!a.methods.empty()) {
    std::string joined;
    for (const auto& m : a.methods) joined += (joined.empty() ? "" : ",") + m;
    o.emplace_back("methods", joined);
  }
  return o;
}

std::optional<fs::path> opt_path(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return fs::path(*s);
}

int cmd_run(const RunArgs& args) {
  const auto flags = flag_overrides(args);
  const auto base = load_config(opt_path(args.config), flags);
  const fs::path out(base.out);
  ensure_directory(out);
  nlohmann::ordered_json manifest;
  manifest["format"] = "coast-run";
  manifest["version"] = 1;
  manifest["config"] = serialize_config(base, false);

  if (!args.grid) {
    run_cell(base, out, opt_path(args.dump_data));
    manifest["cells"] = nlohmann::ordered_json::array({"."});
    write_file_text(out / "manifest.json", manifest.dump(2) + "\n");
    return 0;
  }

  // Grid: precedence is flags > cell overrides > env > file > defaults.
  nlohmann::ordered_json grid;
  grid["format"] = "coast-grid";
  grid["version"] = 1;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const auto& cell : read_grid(*args.grid)) {
    Overrides ordered = cell.overrides;
    ordered.insert(ordered.end(), flags.begin(), flags.end());
    const auto cfg = load_config(opt_path(args.config), ordered);
    const auto reports = run_cell(cfg, out / cell.name, opt_path(args.dump_data));
    nlohmann::ordered_json entry;
    entry["cell"] = cell.name;
    entry["setting"] = std::string(to_string(cfg.setting));
    nlohmann::ordered_json rho = nlohmann::ordered_json::object();
    for (const auto& [method, mean] : mean_rho(reports)) rho[method] = mean;
    entry["mean_rho"] = rho;
    cells.push_back(entry);
    names.push_back(cell.name);
  }
  grid["cells"] = cells;
  write_file_text(out / "grid_summary.json", grid.dump(2) + "\n");
  manifest["cells"] = names;
  write_file_text(out / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

int cmd_assess(const std::string& log_dir, const std::optional<std::string>& config, const std::vector<std::string>& sets,
               const std::vector<std::string>& methods, const std::optional<std::string>& out) {
  if (!fs::is_directory(log_dir)) throw IoError("log directory not found: " + log_dir);
  Overrides overrides;
  if (config) {
    // The assess config is a partial key/value document applied over the
    // configuration stored with the logs.
    std::istringstream in(read_file_text(*config));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(*config + ":" + std::to_string(lineno) + ": expected key = value");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      overrides.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  const auto flag_sets = parse_sets(sets);
  overrides.insert(overrides.end(), flag_sets.begin(), flag_sets.end());
  if (!methods.empty()) {
    std::string joined;
    for (const auto& m : methods) joined += (joined.empty() ? "" : ",") + m;
    overrides.emplace_back("methods", joined);
  } else {
    bool has_methods = false;
    for (const auto& o : overrides) has_methods |= o.first == "methods";
    // Offline assessment defaults to the validation-free methods.
    if (!has_methods) overrides.emplace_back("methods", "coast,cgsv");
  }
  const auto report = assess_log_dir(log_dir, overrides);
  print_report(report);
  if (out) emit_report(report, *out);
  return 0;
}

int cmd_report(const std::string& dir) {
  const fs::path p(dir);
  if (fs::exists(p / "report.json")) {
    print_report(parse_report(p));
    return 0;
  }
  for (const char* name : {"grid_summary.json", "summary.json"}) {
    if (fs::exists(p / name)) {
      const auto j = nlohmann::ordered_json::parse(read_file_text(p / name));
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  }
  throw IoError("no report.json, summary.json or grid_summary.json in " + dir);
}

int cmd_oracle(const std::string& kind, int n, std::uint64_t seed, double ratio, int cases) {
  if (kind == "spearman") {
    if (n < 2 || n > 9) throw ConfigError("oracle spearman: n must be in [2, 9]");
    std::vector<int> truth(static_cast<std::size_t>(n));
    std::iota(truth.begin(), truth.end(), 1);
    std::vector<int> perm = truth;
    std::size_t count = 0, mismatches = 0;
    do {
      const double ref = oracle::spearman_pearson(truth, perm);
      const double impl = spearman(truth, perm);
      mismatches += ref != impl;
      std::printf("%.17g\n", ref);
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::fprintf(stderr, "%zu permutations, %zu mismatches vs library\n", count, mismatches);
    return mismatches == 0 ? 0 : kExitRuntime;
  }
  if (kind == "shapley") {
    if (n < 1 || n > 8) throw ConfigError("oracle shapley: n must be in [1, 8]");
    const auto table = oracle::random_value_table(static_cast<std::size_t>(n), seed);
    const auto ref = oracle::shapley_permutations(static_cast<std::size_t>(n), table);
    const auto impl = shapley_from_table(static_cast<std::size_t>(n), table);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      std::printf("%zu %.17g %.17g\n", i + 1, ref[i], impl[i]);
      worst = std::max(worst, std::abs(ref[i] - impl[i]));
    }
    std::fprintf(stderr, "max |oracle - library| = %.3g\n", worst);
    return worst <= 1e-12 ? 0 : kExitRuntime;
  }
  if (kind == "prune") {
    if (n < 1) throw ConfigError("oracle prune: n must be >= 1");
    Rng rng(seed);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = rng.normal();
    const auto keep = selected_count(values.size(), ratio);
    const auto ref = oracle::prune_layer_by_sort(values, keep);
    const auto impl = prune(LayeredParams({{"layer", values}}), {ratio, 0.02, Selection::by_abs, Clip::sign_clip});
    const bool same = ref == impl.layer(0).values;
    for (double v : ref) std::printf("%g\n", v);
    std::fprintf(stderr, "kept %zu of %d, library %s\n", keep, n, same ? "matches" : "DIFFERS");
    return same ? 0 : kExitRuntime;
  }
  if (kind == "gradcheck") {
    const ModelArch arch;
    double worst = 0.0;
    for (int c = 0; c < cases; ++c) {
      const auto params = init_params(arch, seed + static_cast<std::uint64_t>(c));
      const auto data = generate_base(seed + static_cast<std::uint64_t>(c), 4, 16, 16, arch.classes);
      const auto r = oracle::gradient_check(params, arch, data.samples);
      std::printf("case %d: max rel error %.3e over %zu params (%zu kinks skipped)\n", c, r.max_rel_error, r.checked,
                  r.skipped_kinks);
      worst = std::max(worst, r.max_rel_error);
    }
    std::printf("max relative error %.3e\n", worst);
    return worst <= 1e-4 ? 0 : kExitRuntime;
  }
  std::fprintf(stderr, "unknown oracle kind '%s' (spearman, shapley, prune, gradcheck)\n", kind.c_str());
  return kExitUsage;
}

int cmd_dump_data(const std::optional<std::string>& config, const Overrides& flags, const std::string& out) {
  const auto cfg = load_config(opt_path(config), flags);
  for (auto seed : seed_list(cfg)) {
    const auto dir = fs::path(out) / ("seed_" + std::to_string(seed));
    dump_client_data(build_client_data(cfg, seed), dir);
    std::printf("wrote %d client datasets + validation to %s\n", cfg.clients, dir.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated contribution assessment simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Generate data, train, assess and write reports");
  auto add_common = [](CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--config", a.config, "Experiment config file (key = value)");
    cmd->add_option("--seed", a.seed, "Master seed");
    cmd->add_option("--seeds", a.seeds, "Number of seeds (seed, seed+1, ...)");
    cmd->add_option("--out", a.out, "Output directory");
    cmd->add_option("--jobs", a.jobs, "Parallel workers");
    cmd->add_option("--setting", a.setting, "quantity | noise | resolution | mask");
    cmd->add_option("--method", a.methods, "coast | cgsv | shapley | loo (repeatable)");
    cmd->add_option("--set", a.sets, "Override any config key: key=value (repeatable)");
  };
  add_common(run_cmd, run);
  run_cmd->add_option("--grid", run.grid, "Grid list file; one cell of key=value overrides per line");
  run_cmd->add_option("--dump-data", run.dump_data, "Also write per-client datasets under this directory");

  std::string log_dir;
  std::optional<std::string> assess_config, assess_out;
  std::vector<std::string> assess_sets, assess_methods;
  auto* assess_cmd = app.add_subcommand("assess", "Re-score persisted round logs without retraining");
  assess_cmd->add_option("log_dir", log_dir, "Round log directory (contains manifest.json)")->required();
  assess_cmd->add_option("--config", assess_config, "Assessment overrides file (key = value)");
  assess_cmd->add_option("--set", assess_sets, "Override key=value (repeatable), e.g. k=5");
  assess_cmd->add_option("--method", assess_methods, "Methods to run (default coast, cgsv)");
  assess_cmd->add_option("--out", assess_out, "Write report files here");

  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "Pretty-print a report or summary");
  report_cmd->add_option("dir", report_dir, "Report directory")->required();

  std::string oracle_kind;
  int oracle_n = 4;
  std::uint64_t oracle_seed = 1;
  double oracle_ratio = 10.0;
  int oracle_cases = 1;
  auto* oracle_cmd = app.add_subcommand("oracle", "Brute-force reference computations");
  oracle_cmd->add_option("kind", oracle_kind, "spearman | shapley | prune | gradcheck")->required();
  oracle_cmd->add_option("--n", oracle_n, "Size (ranks, players or layer length)");
  oracle_cmd->add_option("--seed", oracle_seed, "Seed");
  oracle_cmd->add_option("--ratio", oracle_ratio, "Pruning ratio percent");
  oracle_cmd->add_option("--cases", oracle_cases, "Gradient-check cases");

  RunArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-data", "Write per-client datasets for inspection");
  add_common(dump_cmd, dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*assess_cmd) return cmd_assess(log_dir, assess_config, assess_sets, assess_methods, assess_out);
    if (*report_cmd) return cmd_report(report_dir);
    if (*oracle_cmd) return cmd_oracle(oracle_kind, oracle_n, oracle_seed, oracle_ratio, oracle_cases);
    if (*dump_cmd) return cmd_dump_data(dump.config, flag_overrides(dump), dump.out.value_or("data"));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  }
  return kExitUsage;
}
