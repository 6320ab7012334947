#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coast/error.hpp"

namespace coast {

// r_i = |{ j : p_j >= p_i }|. Highest score gets rank 1; tied scores share
// the largest rank of their group.
inline std::vector<int> rank(std::span<const double> scores) {
  if (scores.empty()) throw ConfigError("rank: need at least one score");
  for (double s : scores)
    if (std::isnan(s)) throw NumericError("rank: NaN score");
  std::vector<int> r(scores.size(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (double other : scores)
      if (other >= scores[i]) ++r[i];
  return r;
}

// rho = 1 - 6 * sum (o_i - o'_i)^2 / (n (n^2 - 1)). Rank vectors are used
// as given, ties included.
inline double spearman(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size())
    throw StructuralError("spearman: length mismatch (" + std::to_string(truth.size()) + " vs " +
                          std::to_string(predicted.size()) + ")");
  const auto n = static_cast<long long>(truth.size());
  if (n < 2) throw ConfigError("spearman: need at least 2 ranks");
  long long sum_sq = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const long long d = static_cast<long long>(truth[i]) - predicted[i];
    sum_sq += d * d;
  }
  // One rounding step: (n(n^2-1) - 6 S) / (n(n^2-1)).
  const long long denom = n * (n * n - 1);
  return static_cast<double>(denom - 6 * sum_sq) / static_cast<double>(denom);
}

}  // namespace coast
