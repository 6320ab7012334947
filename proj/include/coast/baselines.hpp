#pragma once

// Reference contribution measures computed from the same round logs:
//   - exact per-round Shapley value with validation accuracy as the
//     coalition value (all 2^N coalitions enumerated),
//   - leave-one-out on the same coalition values,
//   - CGSV-style cosine between each raw update and the aggregate update.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coast/error.hpp"
#include "coast/flengine.hpp"
#include "coast/model.hpp"
#include "coast/params.hpp"
#include "coast/scoreboard.hpp"

namespace coast {

inline constexpr int kMaxExactShapleyClients = 12;

using Coalition = std::uint32_t;  // bit i set <=> client i (0-based) is in S

inline Coalition grand_coalition(std::size_t n) { return (Coalition{1} << n) - 1; }

// Everything needed to value a coalition in one round.
struct CoalitionContext {
  const LayeredParams& global_before;
  std::span<const LayeredParams> updates;  // raw Delta_i
  const ModelArch& arch;
  const Dataset& validation;
};

// v(S) = accuracy(Theta^{t-1} + mean_{i in S} Delta_i); v(empty) = accuracy(Theta^{t-1}).
inline double coalition_value(Coalition s, const CoalitionContext& ctx) {
  LayeredParams model = ctx.global_before;
  const int size = std::popcount(s);
  if (size > 0) {
    for (std::size_t i = 0; i < ctx.updates.size(); ++i)
      if (s & (Coalition{1} << i)) add_scaled(model, ctx.updates[i], 1.0 / size);
  }
  return accuracy(model, ctx.arch, ctx.validation);
}

inline void check_exact_shapley_size(std::size_t n) {
  if (n == 0) throw ConfigError("shapley: no clients");
  if (n > static_cast<std::size_t>(kMaxExactShapleyClients))
    throw CapabilityError("exact Shapley enumeration supports at most " + std::to_string(kMaxExactShapleyClients) +
                          " clients (got " + std::to_string(n) + "); use a sampling estimator instead");
}

// v(S) for every S, indexed by the coalition bitmask. Each subset is valued once.
inline std::vector<double> coalition_table(std::size_t n, const std::function<double(Coalition)>& value) {
  check_exact_shapley_size(n);
  std::vector<double> table(std::size_t{1} << n);
  for (Coalition s = 0; s < table.size(); ++s) table[s] = value(s);
  return table;
}

// phi_i = sum_{S not containing i} |S|! (n-|S|-1)! / n! * (v(S+i) - v(S)).
inline std::vector<double> shapley_from_table(std::size_t n, std::span<const double> table) {
  check_exact_shapley_size(n);
  if (table.size() != (std::size_t{1} << n)) throw StructuralError("shapley: value table has wrong size");
  // weight[s] = s! (n-s-1)! / n!, built as a product to stay exact-ish for n <= 12.
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    double w = 1.0 / static_cast<double>(n);
    // 1 / (n * C(n-1, s))
    for (std::size_t k = 1; k <= s; ++k) w *= static_cast<double>(k) / static_cast<double>(n - k);
    weight[s] = w;
  }
  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Coalition bit = Coalition{1} << i;
    for (Coalition s = 0; s < table.size(); ++s) {
      if (s & bit) continue;
      phi[i] += weight[static_cast<std::size_t>(std::popcount(s))] * (table[s | bit] - table[s]);
    }
  }
  return phi;
}

// LOO_i = v(C) - v(C \ {i}).
inline std::vector<double> leave_one_out_from_table(std::size_t n, std::span<const double> table) {
  if (table.size() != (std::size_t{1} << n)) throw StructuralError("leave-one-out: value table has wrong size");
  const Coalition all = grand_coalition(n);
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) loo[i] = table[all] - table[all & ~(Coalition{1} << i)];
  return loo;
}

inline std::vector<double> round_coalition_table(const CoalitionContext& ctx) {
  return coalition_table(ctx.updates.size(), [&](Coalition s) { return coalition_value(s, ctx); });
}

inline std::vector<double> shapley_round(const CoalitionContext& ctx) {
  return shapley_from_table(ctx.updates.size(), round_coalition_table(ctx));
}

inline std::vector<double> leave_one_out_round(const CoalitionContext& ctx) {
  // Only the grand coalition and the N coalitions missing one client matter.
  const std::size_t n = ctx.updates.size();
  if (n == 0) throw ConfigError("leave-one-out: no clients");
  const Coalition all = grand_coalition(n);
  const double full = coalition_value(all, ctx);
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) loo[i] = full - coalition_value(all & ~(Coalition{1} << i), ctx);
  return loo;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// g_i = cos(Delta_i, sum_j Delta_j) on flattened raw updates.
inline std::vector<double> cgsv_round(std::span<const LayeredParams> updates) {
  if (updates.empty()) throw ConfigError("cgsv: no clients");
  std::vector<std::vector<double>> flat;
  flat.reserve(updates.size());
  for (const auto& u : updates) flat.push_back(flatten(u));
  std::vector<double> sum(flat.front().size(), 0.0);
  for (const auto& f : flat) {
    if (f.size() != sum.size()) throw StructuralError("cgsv: architecture mismatch");
    for (std::size_t k = 0; k < f.size(); ++k) sum[k] += f[k];
  }
  std::vector<double> g;
  g.reserve(flat.size());
  for (const auto& f : flat) g.push_back(cosine(f, sum));
  return g;
}

inline std::vector<double> cgsv_round(const RoundLog& log) {
  if (log.raw_updates.empty()) throw ConfigError("cgsv: log has no raw updates");
  return cgsv_round(log.raw_updates);
}

// Scores of every round of a log set, one board per method.
struct ValidationBaselines {
  ScoreBoard shapley;
  ScoreBoard leave_one_out;
  std::vector<double> efficiency_gap;  // per round: |sum phi - (v(C) - v(empty))|
};

inline ValidationBaselines assess_validation_baselines(std::span<const RoundLog> logs, const ModelArch& arch,
                                                       const Dataset& validation) {
  if (logs.empty()) throw ConfigError("no round logs");
  const std::size_t n = logs.front().num_clients();
  check_exact_shapley_size(n);
  std::vector<int> rounds;
  std::vector<std::vector<double>> phi_rounds, loo_rounds;
  ValidationBaselines out;
  for (const auto& log : logs) {
    const CoalitionContext ctx{log.global_before, log.raw_updates, arch, validation};
    const auto table = round_coalition_table(ctx);
    auto phi = shapley_from_table(n, table);
    double sum = 0.0;
    for (double p : phi) sum += p;
    out.efficiency_gap.push_back(std::abs(sum - (table[grand_coalition(n)] - table[0])));
    rounds.push_back(log.round);
    phi_rounds.push_back(std::move(phi));
    loo_rounds.push_back(leave_one_out_from_table(n, table));
  }
  out.shapley = accumulate("shapley", rounds, phi_rounds, n);
  out.leave_one_out = accumulate("loo", rounds, loo_rounds, n);
  return out;
}

inline ScoreBoard assess_cgsv(std::span<const RoundLog> logs) {
  if (logs.empty()) throw ConfigError("no round logs");
  std::vector<int> rounds;
  std::vector<std::vector<double>> per_round;
  for (const auto& log : logs) {
    rounds.push_back(log.round);
    per_round.push_back(cgsv_round(log));
  }
  return accumulate("cgsv", rounds, per_round, logs.front().num_clients());
}

}  // namespace coast
