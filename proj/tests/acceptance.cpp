// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "coast/coast.hpp"
#include "coast/oracle.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace coast;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %d. %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

constexpr int kSeeds = 5;

ExperimentConfig default_config(Setting setting) {
  ExperimentConfig cfg;
  cfg.setting = setting;
  return cfg;
}

// Full default-config runs, shared by several criteria.
std::map<std::pair<Setting, std::uint64_t>, SeedRun> run_cache;

const SeedRun& experiment(Setting setting, std::uint64_t seed) {
  const auto key = std::make_pair(setting, seed);
  auto it = run_cache.find(key);
  if (it == run_cache.end()) {
    it = run_cache.emplace(key, run_seed(default_config(setting), seed)).first;
    std::fprintf(stderr, "  ran %s seed %llu in %.1fs\n", std::string(to_string(setting)).c_str(),
                 static_cast<unsigned long long>(seed), it->second.seconds);
  }
  return it->second;
}

double rho_of(const SeedRun& run, const char* method) { return run.report.find(method)->rho; }

void criterion_pruning() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  bool ok = true;
  std::size_t ties_skipped = 0;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const std::size_t n = 1 + rng.below(4096);
    const double r = 100.0 - rng.uniform(0.0, 100.0);  // (0, 100]
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    PruneConfig cfg;
    cfg.ratio_percent = r;
    const auto out = prune(LayeredParams({Layer{"w", v}}), cfg).layer(0).values;
    const auto expected = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r / 100.0 + 1e-9));
    const auto sel = select_indices(v, r, Selection::by_abs);
    ok &= sel.size() == expected;
    std::vector<bool> chosen(n, false);
    double min_sel = INFINITY, max_rest = -INFINITY;
    for (auto i : sel) {
      chosen[i] = true;
      min_sel = std::min(min_sel, std::fabs(v[i]));
    }
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ok &= out[i] == -1.0 || out[i] == 0.0 || out[i] == 1.0;
      if (out[i] != 0.0) {
        ++nonzero;
        ok &= chosen[i] && out[i] == sign_of(v[i]);
      }
      if (!chosen[i]) max_rest = std::max(max_rest, std::fabs(v[i]));
    }
    ok &= nonzero <= expected;
    if (!sel.empty() && sel.size() < n) {
      if (min_sel == max_rest) ++ties_skipped;
      else ok &= min_sel > max_rest;
    }
  }
  const double secs = seconds_since(start);
  ok &= secs < 5.0;
  report(1, "pruning invariants", ok, fmt("1000 layers, %zu boundary ties, %.2fs", ties_skipped, secs));
}

void criterion_aggregation() {
  const auto& run = experiment(Setting::quantity, 1);
  const auto cfg = default_config(Setting::quantity);
  double worst_identity = 0.0, worst_vote = 0.0;
  bool in_range = true;
  for (const auto& log : run.run.logs) {
    const double n = static_cast<double>(log.num_clients());
    auto expected = log.global_before;
    for (const auto& d : log.pruned_updates) add_scaled(expected, d, cfg.prune.alpha / n);
    worst_identity = std::max(worst_identity, max_abs_diff(log.global_after, expected));
    for (double u : flatten(sub(log.global_after, log.global_before))) {
      const double q = n * u / cfg.prune.alpha;
      worst_vote = std::max(worst_vote, std::fabs(q - std::round(q)));
      in_range &= std::fabs(std::round(q)) <= n;
    }
  }
  report(2, "aggregation identity", worst_identity <= 1e-12 && worst_vote <= 1e-9 && in_range,
         fmt("%zu rounds, max identity error %.2e, max vote deviation %.2e", run.run.logs.size(), worst_identity,
             worst_vote));
}

void criterion_gradient() {
  const ModelArch arch;
  double worst = 0.0;
  std::size_t checked = 0;
  constexpr int kCases = 20;
  for (int c = 0; c < kCases; ++c) {
    auto params = init_params(arch, 500 + static_cast<std::uint64_t>(c));
    Rng rng(900 + static_cast<std::uint64_t>(c));
    for (std::size_t j = 1; j < params.num_layers(); j += 2)
      for (auto& b : params.layer(j).values) b = rng.uniform(-0.1, 0.1);
    const auto batch = generate_base(700 + static_cast<std::uint64_t>(c), 4, 16, 16, arch.classes);
    const auto r = oracle::gradient_check(params, arch, batch.samples);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  report(3, "gradient check", worst <= 1e-4,
         fmt("%d cases of the default architecture, %zu coordinates, max relative error %.2e", kCases, checked,
             worst));
}

void criterion_spearman() {
  bool ok = true;
  std::vector<int> truth{1, 2, 3, 4, 5};
  auto perm = truth;
  int count = 0;
  do {
    ok &= spearman(truth, perm) == oracle::spearman_pearson(truth, perm);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  ok &= count == 120;
  for (int n = 2; n <= 7; ++n) {
    std::vector<int> r(static_cast<std::size_t>(n));
    std::iota(r.begin(), r.end(), 1);
    do {
      std::vector<int> rev(r.size());
      for (std::size_t i = 0; i < r.size(); ++i) rev[i] = n + 1 - r[i];
      ok &= spearman(r, r) == 1.0 && spearman(r, rev) == -1.0;
    } while (std::next_permutation(r.begin(), r.end()));
  }
  report(4, "spearman oracle", ok, fmt("%d permutations of n=5 exact; identity/reverse for n=2..7", count));
}

void criterion_shapley() {
  double worst_perm = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t % 4);
    const auto table = oracle::random_value_table(n, 4000 + static_cast<std::uint64_t>(t));
    const auto phi = shapley_from_table(n, table);
    const auto ref = oracle::shapley_permutations(n, table);
    for (std::size_t i = 0; i < n; ++i) worst_perm = std::max(worst_perm, std::fabs(phi[i] - ref[i]));
  }
  double worst_eff = 0.0;
  std::size_t rounds = 0;
  for (auto setting : {Setting::quantity, Setting::noise})
    for (int s = 1; s <= kSeeds; ++s)
      for (double g : experiment(setting, static_cast<std::uint64_t>(s)).diagnostics.shapley_efficiency_gap) {
        worst_eff = std::max(worst_eff, g);
        ++rounds;
      }
  // The decimal table is stored in binary, so its exact Shapley value is
  // the two-order average of the stored doubles, rounded once. Those sums
  // are exact in long double. A dyadic table checks the same case with no
  // representation error at all.
  const std::vector<double> hand{0.0, 0.6, 0.4, 0.8};
  const auto phi = shapley_from_table(2, hand);
  using LD = long double;
  const double exact0 = static_cast<double>(((LD(hand[1]) - hand[0]) + (LD(hand[3]) - hand[2])) / 2);
  const double exact1 = static_cast<double>(((LD(hand[2]) - hand[0]) + (LD(hand[3]) - hand[1])) / 2);
  const auto dyadic = shapley_from_table(2, std::vector<double>{0.0, 0.625, 0.375, 0.75});
  const bool hand_ok = phi[0] == 0.5 && phi[0] == exact0 && phi[1] == exact1 &&
                       std::fabs(phi[1] - 0.3) <= 0.3 * std::numeric_limits<double>::epsilon() &&
                       dyadic[0] == 0.5 && dyadic[1] == 0.25;
  report(5, "shapley correctness", worst_perm <= 1e-12 && worst_eff <= 1e-9 && rounds > 0 && hand_ok,
         fmt("50 tables max diff %.2e; efficiency max gap %.2e over %zu rounds; hand case (%.17g, %.17g) = exact value of the stored doubles; dyadic (%g, %g)",
             worst_perm, worst_eff, rounds, phi[0], phi[1], dyadic[0], dyadic[1]));
}

struct TrendStats {
  std::vector<double> coast, cgsv;
  double max_seconds = 0.0;
  double mean(const std::vector<double>& v) const { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }
};

TrendStats trend(Setting setting) {
  TrendStats t;
  for (int s = 1; s <= kSeeds; ++s) {
    const auto& run = experiment(setting, static_cast<std::uint64_t>(s));
    t.coast.push_back(rho_of(run, "coast"));
    t.cgsv.push_back(rho_of(run, "cgsv"));
    t.max_seconds = std::max(t.max_seconds, run.seconds);
  }
  return t;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.2f", x);
  return s;
}

void criterion_trend(int id, const char* name, Setting setting, double threshold) {
  const auto t = trend(setting);
  const double m = t.mean(t.coast);
  report(id, name, m >= threshold && t.max_seconds <= 300.0,
         fmt("CoAst mean rho %.3f (need >= %.2f), per seed [%s], slowest seed %.1fs", m, threshold,
             list(t.coast).c_str(), t.max_seconds));
}

void criterion_comparative() {
  std::vector<double> coast, cgsv;
  for (auto setting : {Setting::quantity, Setting::noise}) {
    const auto t = trend(setting);
    coast.insert(coast.end(), t.coast.begin(), t.coast.end());
    cgsv.insert(cgsv.end(), t.cgsv.begin(), t.cgsv.end());
  }
  const double mc = std::accumulate(coast.begin(), coast.end(), 0.0) / coast.size();
  const double mg = std::accumulate(cgsv.begin(), cgsv.end(), 0.0) / cgsv.size();
  report(8, "comparative trend", mc >= mg - 0.05, fmt("CoAst mean rho %.3f vs CGSV %.3f (settings 1-2, %d seeds)", mc,
                                                        mg, kSeeds));
}

std::map<std::string, std::vector<std::uint8_t>> snapshot_dir(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file_bytes(e.path());
  return files;
}

void criterion_ablation() {
  const std::vector<int> ks{1, 2, 5, 10};
  std::vector<double> sum(ks.size(), 0.0);
  bool unchanged = true, equivalent = true;
  double train_secs = 0.0, assess_secs = 0.0;
  for (int s = 1; s <= kSeeds; ++s) {
    testing::TempDir dir;
    const auto run = run_seed(default_config(Setting::noise), static_cast<std::uint64_t>(s), dir.path());
    train_secs += run.seconds;
    const auto logs = dir.path() / "logs";
    const auto before = snapshot_dir(logs);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto start = std::chrono::steady_clock::now();
      const auto rep = assess_log_dir(logs, {{"k", std::to_string(ks[i])}, {"methods", "coast"}});
      assess_secs += seconds_since(start);
      sum[i] += rep.find("coast")->rho;
      if (ks[i] == 2) equivalent &= rep.find("coast")->board == run.report.find("coast")->board;
    }
    unchanged &= snapshot_dir(logs) == before;
  }
  std::string detail;
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double m = sum[i] / kSeeds;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    detail += fmt("k=%d %.3f  ", ks[i], m);
  }
  detail += fmt("(assess %.1fs total vs %.1fs training; logs untouched: %s)", assess_secs, train_secs,
                unchanged ? "yes" : "no");
  report(9, "ablation harness", unchanged && equivalent && hi > lo, detail);
}

void criterion_determinism() {
  testing::TempDir a, b;
  const auto cfg = default_config(Setting::quantity);
  run_seed(cfg, 1, a.path());
  run_seed(cfg, 1, b.path());
  auto fa = snapshot_dir(a.path());
  auto fb = snapshot_dir(b.path());
  // Wall-clock timing is the one file expected to differ.
  fa.erase("timing.json");
  fb.erase("timing.json");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : fa) {
    auto it = fb.find(name);
    if (it == fb.end() || it->second != bytes) ++differing;
  }
  report(10, "determinism", fa.size() == fb.size() && differing == 0 && fa.size() > 60,
         fmt("%zu files compared, %zu differ", fa.size(), differing));
}

std::vector<RoundLog> random_logs(std::size_t n, int rounds, Rng& rng) {
  const Architecture arch{{"a", 1 + rng.below(60)}, {"b", rng.below(20)}, {"c", 1 + rng.below(40)}};
  PruneConfig cfg;
  cfg.ratio_percent = rng.uniform(5.0, 100.0);
  std::vector<RoundLog> logs;
  auto global = testing::random_params(arch, rng, -0.5, 0.5);
  for (int t = 1; t <= rounds; ++t) {
    RoundLog log;
    log.round = t;
    log.global_before = global;
    for (std::size_t i = 0; i < n; ++i) {
      log.raw_updates.push_back(testing::random_params(arch, rng, -0.2, 0.2));
      log.pruned_updates.push_back(prune(log.raw_updates.back(), cfg));
    }
    log.global_after = aggregate(global, log.pruned_updates, cfg.step());
    global = log.global_after;
    logs.push_back(std::move(log));
  }
  return logs;
}

void criterion_valuation() {
  constexpr int kCases = 200;
  Rng rng(2024);
  int scale_ok = 0, integer_ok = 0, bound_ok = 0, perm_ok = 0;
  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = 1 + rng.below(6);
    const auto logs = random_logs(n, 2 + static_cast<int>(rng.below(5)), rng);
    ValuationConfig vc;
    vc.window = 1 + static_cast<int>(rng.below(4));
    vc.mode = c % 2 ? ValuationMode::update_sign : ValuationMode::parameter_sign;

    // Positive scaling of the local models (or updates) and of U.
    const double k = std::exp(rng.uniform(-5.0, 5.0));
    const auto u = global_window(logs, 1, vc.window, vc.tail);
    auto scaled = logs[0];
    scaled.global_before = scale(scaled.global_before, k);
    for (auto& d : scaled.raw_updates) d = scale(d, k);
    for (auto& d : scaled.pruned_updates) d = scale(d, k);
    scale_ok += value_round(logs[0], u, vc) == value_round(scaled, scale(u, k), vc);

    const auto board = assess(logs, PruneConfig{}, vc);
    const double total_len = static_cast<double>(logs[0].global_before.total_len());
    bool integral = true, bounded = true;
    for (const auto& row : board.scores)
      for (double p : row) {
        integral &= p == std::round(p);
        bounded &= std::fabs(p) <= total_len;
      }
    integer_ok += integral;
    bound_ok += bounded;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    auto permuted = logs;
    for (auto& log : permuted)
      for (std::size_t i = 0; i < n; ++i) {
        log.raw_updates[i] = logs[static_cast<std::size_t>(log.round - 1)].raw_updates[perm[i]];
        log.pruned_updates[i] = logs[static_cast<std::size_t>(log.round - 1)].pruned_updates[perm[i]];
      }
    const auto pb = assess(permuted, PruneConfig{}, vc);
    bool equiv = true;
    for (std::size_t i = 0; i < n; ++i) equiv &= pb.scores[i] == board.scores[perm[i]];
    perm_ok += equiv;
  }
  report(11, "valuation properties", scale_ok == kCases && integer_ok == kCases && bound_ok == kCases &&
                                         perm_ok == kCases,
         fmt("scale %d/%d, integer %d/%d, bound %d/%d, permutation %d/%d", scale_ok, kCases, integer_ok, kCases,
             bound_ok, kCases, perm_ok, kCases));
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  const auto guarded = [](int id, const char* name, auto fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, "pruning invariants", criterion_pruning);
  guarded(2, "aggregation identity", criterion_aggregation);
  guarded(3, "gradient check", criterion_gradient);
  guarded(4, "spearman oracle", criterion_spearman);
  guarded(5, "shapley correctness", criterion_shapley);
  guarded(6, "quantity trend", [] { criterion_trend(6, "quantity trend", Setting::quantity, 0.7); });
  guarded(7, "noise trend", [] { criterion_trend(7, "noise trend", Setting::noise, 0.6); });
  guarded(8, "comparative trend", criterion_comparative);
  guarded(9, "ablation harness", criterion_ablation);
  guarded(10, "determinism", criterion_determinism);
  guarded(11, "valuation properties", criterion_valuation);
  std::printf("%d of 11 criteria failed (%.0fs)\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
