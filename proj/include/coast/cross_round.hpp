#pragma once

// Cross-round valuation. A client's round-t local model is scored by the
// sign agreement between it and the global movement over the next k rounds:
//
//   U(t, k) = Theta^{t+k} - Theta^t
//   p_i^t   = sum_h sgn(theta_i^t[h]) * sgn(U(t, k)[h])
//
// update_sign mode replaces theta_i^t by the client's pruned update.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coast/error.hpp"
#include "coast/flengine.hpp"
#include "coast/params.hpp"
#include "coast/prune.hpp"
#include "coast/scoreboard.hpp"

namespace coast {

enum class ValuationMode { parameter_sign, update_sign };
enum class TailPolicy { truncate, drop };

inline std::string_view to_string(ValuationMode m) {
  return m == ValuationMode::parameter_sign ? "parameter_sign" : "update_sign";
}
inline std::string_view to_string(TailPolicy p) { return p == TailPolicy::truncate ? "truncate" : "drop"; }

inline std::optional<ValuationMode> parse_valuation_mode(std::string_view s) {
  if (s == "parameter_sign") return ValuationMode::parameter_sign;
  if (s == "update_sign") return ValuationMode::update_sign;
  return std::nullopt;
}

inline std::optional<TailPolicy> parse_tail_policy(std::string_view s) {
  if (s == "truncate") return TailPolicy::truncate;
  if (s == "drop") return TailPolicy::drop;
  return std::nullopt;
}

struct ValuationConfig {
  int window = 2;  // k
  ValuationMode mode = ValuationMode::parameter_sign;
  TailPolicy tail = TailPolicy::truncate;

  void validate() const {
    if (window < 1) throw ConfigError("valuation window k must be >= 1, got " + std::to_string(window));
  }

  friend bool operator==(const ValuationConfig&, const ValuationConfig&) = default;
};

inline void check_log_sequence(std::span<const RoundLog> logs) {
  if (logs.empty()) throw ConfigError("no round logs");
  for (std::size_t k = 0; k < logs.size(); ++k)
    if (logs[k].round != static_cast<int>(k + 1))
      throw StructuralError("round logs must cover rounds 1..M in order");
}

// Rounds that receive a score under the policy, for M = logs.size().
inline std::vector<int> scorable_rounds(int total_rounds, int window, TailPolicy tail) {
  std::vector<int> rounds;
  const int last = tail == TailPolicy::truncate ? total_rounds - 1 : total_rounds - window;
  for (int t = 1; t <= last; ++t) rounds.push_back(t);
  return rounds;
}

// U(t, k) as the telescoped difference of global models. Under truncate the
// window ends at round M; under drop a window running past M is an error.
inline LayeredParams global_window(std::span<const RoundLog> logs, int t, int window, TailPolicy tail) {
  check_log_sequence(logs);
  if (window < 1) throw ConfigError("window must be >= 1");
  const int total = static_cast<int>(logs.size());
  if (t < 1 || t > total) throw ConfigError("round " + std::to_string(t) + " outside logged range");
  if (t == total) throw EmptyWindowError("round " + std::to_string(t) + " is the last round; no future update exists");
  if (tail == TailPolicy::drop && t + window > total)
    throw EmptyWindowError("round " + std::to_string(t) + " + k exceeds the last round under the drop policy");
  const int end = std::min(t + window, total);
  return sub(logs[static_cast<std::size_t>(end - 1)].global_after, logs[static_cast<std::size_t>(t - 1)].global_after);
}

// Score of every client for one round, each an exact integer.
inline std::vector<double> value_round(const RoundLog& log, const LayeredParams& window_update,
                                       const ValuationConfig& cfg, const PruneConfig& prune_cfg = {}) {
  require_same_arch(log.global_before, window_update, "value_round");
  const std::size_t n = log.num_clients();
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const LayeredParams& delta = log.raw_updates[i];
    require_same_arch(delta, window_update, "value_round");
    std::optional<LayeredParams> recomputed;
    const LayeredParams* pruned = nullptr;
    if (cfg.mode == ValuationMode::update_sign) {
      if (log.has_pruned()) {
        pruned = &log.pruned_updates[i];
      } else {
        recomputed = prune(delta, prune_cfg);
        pruned = &*recomputed;
      }
    }
    std::int64_t score = 0;
    for (std::size_t j = 0; j < delta.num_layers(); ++j) {
      const auto& u = window_update.layer(j).values;
      const auto& base = log.global_before.layer(j).values;
      const auto& d = delta.layer(j).values;
      for (std::size_t m = 0; m < u.size(); ++m) {
        const double local = cfg.mode == ValuationMode::parameter_sign ? base[m] + d[m] : pruned->layer(j).values[m];
        score += static_cast<std::int64_t>(sign_of(local) * sign_of(u[m]));
      }
    }
    scores[i] = static_cast<double>(score);
  }
  return scores;
}

// Sums per-round scores over every scorable round. Logs from a plain run are
// accepted; update_sign then re-prunes the raw updates with prune_cfg.
inline ScoreBoard assess(std::span<const RoundLog> logs, const PruneConfig& prune_cfg, const ValuationConfig& cfg) {
  cfg.validate();
  check_log_sequence(logs);
  const auto rounds = scorable_rounds(static_cast<int>(logs.size()), cfg.window, cfg.tail);
  if (rounds.empty()) throw EmptyWindowError("no round can be scored: M too small for the window/tail policy");
  std::vector<std::vector<double>> per_round;
  per_round.reserve(rounds.size());
  for (int t : rounds) {
    const auto window = global_window(logs, t, cfg.window, cfg.tail);
    per_round.push_back(value_round(logs[static_cast<std::size_t>(t - 1)], window, cfg, prune_cfg));
  }
  return accumulate("coast", rounds, per_round, logs.front().num_clients());
}

}  // namespace coast
