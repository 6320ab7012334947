#pragma once

// Brute-force reference computations used by the test suites and the
// `oracle` CLI subcommand. Nothing in the library proper includes this
// header; every routine here is written independently of the code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "coast/model.hpp"
#include "coast/params.hpp"
#include "coast/synthdata.hpp"

namespace coast::oracle {

// Spearman rho as the Pearson correlation of two rank vectors, evaluated in
// integers and finished with one division.
inline double spearman_pearson(std::span<const int> a, std::span<const int> b) {
  const auto n = static_cast<long long>(a.size());
  long long sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += static_cast<long long>(a[i]) * a[i];
    sbb += static_cast<long long>(b[i]) * b[i];
    sab += static_cast<long long>(a[i]) * b[i];
  }
  const long long cov = n * sab - sa * sb;
  const long long va = n * saa - sa * sa;
  const long long vb = n * sbb - sb * sb;
  if (va == vb) return static_cast<double>(cov) / static_cast<double>(va);
  return static_cast<double>(cov) / std::sqrt(static_cast<double>(va) * static_cast<double>(vb));
}

// Shapley values as the average marginal contribution over all n! orders.
// table[mask] is v(S) for the coalition with bit i set for client i.
inline std::vector<double> shapley_permutations(std::size_t n, std::span<const double> table) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(n, 0.0);
  double count = 0.0;
  do {
    std::uint32_t mask = 0;
    for (int i : order) {
      const std::uint32_t next = mask | (std::uint32_t{1} << i);
      phi[static_cast<std::size_t>(i)] += table[next] - table[mask];
      mask = next;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= count;
  return phi;
}

// Pruned layer by full stable sort on descending |value|.
inline std::vector<double> prune_layer_by_sort(std::span<const double> values, std::size_t keep) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(values[a]) > std::fabs(values[b]); });
  std::vector<double> out(values.size(), 0.0);
  for (std::size_t k = 0; k < keep && k < idx.size(); ++k) {
    const double v = values[idx[k]];
    out[idx[k]] = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
  }
  return out;
}

// Signed agreement of two flat vectors, scalar loop.
inline long long sign_agreement(std::span<const double> local, std::span<const double> update) {
  auto s = [](double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); };
  long long total = 0;
  for (std::size_t h = 0; h < local.size(); ++h) total += s(local[h]) * s(update[h]);
  return total;
}

// Straightforward forward pass: mean cross-entropy over the batch, computed
// with explicit matrix indexing and a log-sum-exp. `pattern`, when given,
// receives the on/off state of every ReLU for every sample.
inline double reference_loss(const LayeredParams& params, const ModelArch& arch, std::span<const Sample> batch,
                             std::vector<bool>* pattern = nullptr) {
  const auto widths = arch.widths();
  const std::size_t layers = widths.size() - 1;
  if (pattern) pattern->clear();
  double total = 0.0;
  for (const auto& sample : batch) {
    std::vector<double> a(sample.pixels);
    for (std::size_t d = 0; d < layers; ++d) {
      const auto n_in = static_cast<std::size_t>(widths[d]);
      const auto n_out = static_cast<std::size_t>(widths[d + 1]);
      const auto& W = params.layer(2 * d).values;
      const auto& b = params.layer(2 * d + 1).values;
      std::vector<double> z(n_out);
      for (std::size_t o = 0; o < n_out; ++o) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n_in; ++k) acc += W[o * n_in + k] * a[k];
        z[o] = acc + b[o];
      }
      if (d + 1 < layers) {
        for (auto& v : z) {
          if (arch.activation == Activation::relu) {
            if (pattern) pattern->push_back(v > 0);
            v = std::max(v, 0.0);
          } else {
            v = std::tanh(v);
          }
        }
      }
      a = std::move(z);
    }
    const double m = *std::max_element(a.begin(), a.end());
    double sum = 0.0;
    for (double v : a) sum += std::exp(v - m);
    total += m + std::log(sum) - a[static_cast<std::size_t>(sample.label)];
  }
  return total / static_cast<double>(batch.size());
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // coordinates whose +-step flips a ReLU
};

// Central finite differences against the analytic gradient. Relative error
// is |a - f| / max(|a| + |f|, floor). Coordinates where the perturbation
// changes the ReLU pattern are not differentiable there and are skipped.
inline GradCheckResult gradient_check(const LayeredParams& params, const ModelArch& arch, std::span<const Sample> batch,
                                      double step = 1e-5, double floor = 1e-6) {
  const auto analytic = backward(params, arch, batch);
  GradCheckResult result;
  LayeredParams probe = params;
  std::vector<bool> base_pattern, plus_pattern, minus_pattern;
  reference_loss(params, arch, batch, &base_pattern);
  for (std::size_t j = 0; j < probe.num_layers(); ++j) {
    auto& values = probe.layer(j).values;
    for (std::size_t m = 0; m < values.size(); ++m) {
      const double original = values[m];
      values[m] = original + step;
      const double plus = reference_loss(probe, arch, batch, &plus_pattern);
      values[m] = original - step;
      const double minus = reference_loss(probe, arch, batch, &minus_pattern);
      values[m] = original;
      if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
        ++result.skipped_kinks;
        continue;
      }
      const double fd = (plus - minus) / (2.0 * step);
      const double a = analytic.layer(j).values[m];
      const double rel = std::fabs(a - fd) / std::max(std::fabs(a) + std::fabs(fd), floor);
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

// Random value table for n players; v(empty) = 0.
inline std::vector<double> random_value_table(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> table(std::size_t{1} << n);
  for (std::size_t s = 1; s < table.size(); ++s) table[s] = rng.uniform(-1.0, 1.0);
  return table;
}

}  // namespace coast::oracle
