#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coast/error.hpp"
#include "coast/ranking.hpp"

namespace coast {

// Per-client, per-round contribution scores with their row totals and the
// ranking derived from the totals. Shared by every assessment method.
struct ScoreBoard {
  std::string method;
  std::vector<int> rounds;                   // scored round numbers, ascending
  std::vector<std::vector<double>> scores;  // [client][k] for rounds[k]
  std::vector<double> totals;               // [client]
  std::vector<int> ranking;                 // [client], from the totals

  std::size_t num_clients() const { return scores.size(); }

  friend bool operator==(const ScoreBoard&, const ScoreBoard&) = default;
};

// per_round[k][i] is client i's score in rounds[k].
inline ScoreBoard accumulate(std::string method, std::span<const int> rounds,
                             std::span<const std::vector<double>> per_round, std::size_t num_clients) {
  if (rounds.size() != per_round.size()) throw StructuralError("accumulate: rounds and scores differ in length");
  if (num_clients == 0) throw ConfigError("accumulate: no clients");
  ScoreBoard board;
  board.method = std::move(method);
  board.rounds.assign(rounds.begin(), rounds.end());
  board.scores.assign(num_clients, std::vector<double>(rounds.size(), 0.0));
  board.totals.assign(num_clients, 0.0);
  for (std::size_t k = 0; k < per_round.size(); ++k) {
    if (per_round[k].size() != num_clients) throw StructuralError("accumulate: client count changed between rounds");
    for (std::size_t i = 0; i < num_clients; ++i) {
      board.scores[i][k] = per_round[k][i];
      board.totals[i] += per_round[k][i];
    }
  }
  board.ranking = rank(board.totals);
  return board;
}

}  // namespace coast
