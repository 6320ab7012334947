#pragma once

// Dense feed-forward classifier with hand-derived gradients.
//
// Parameter layout for hidden sizes [h1, ..., hk] and C classes:
//   dense0.weight (h1 x input, row-major), dense0.bias (h1),
//   ..., denseK.weight (C x hk), denseK.bias (C).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coast/error.hpp"
#include "coast/params.hpp"
#include "coast/random.hpp"
#include "coast/synthdata.hpp"

namespace coast {

enum class Activation { relu, tanh };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  return std::nullopt;
}

struct ModelArch {
  int input_dim = 256;
  std::vector<int> hidden_dims{64};
  int classes = 4;
  Activation activation = Activation::relu;

  // Layer widths from input to logits.
  std::vector<int> widths() const {
    std::vector<int> w{input_dim};
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(classes);
    return w;
  }

  std::size_t dense_layers() const { return hidden_dims.size() + 1; }

  void validate() const {
    if (input_dim < 1 || classes < 1) throw ConfigError("model dimensions must be >= 1");
    for (int h : hidden_dims)
      if (h < 1) throw ConfigError("hidden dimensions must be >= 1");
  }

  Architecture param_arch() const {
    const auto w = widths();
    Architecture a;
    for (std::size_t d = 0; d + 1 < w.size(); ++d) {
      const std::string prefix = "dense" + std::to_string(d);
      a.push_back({prefix + ".weight", static_cast<std::size_t>(w[d + 1]) * static_cast<std::size_t>(w[d])});
      a.push_back({prefix + ".bias", static_cast<std::size_t>(w[d + 1])});
    }
    return a;
  }

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double lr_decay = 0.99;  // per round
  int batch_size = 32;
  int local_epochs = 1;

  // Round t (1-based) trains at lr * decay^(t-1), so round 1 uses the
  // initial rate.
  double lr_at(int round) const { return learning_rate * std::pow(lr_decay, std::max(0, round - 1)); }

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (local_epochs < 0) throw ConfigError("local_epochs must be >= 0");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Weights ~ Normal(0, 1/fan_in), biases zero.
inline LayeredParams init_params(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  auto params = LayeredParams::zeros(arch.param_arch());
  const auto w = arch.widths();
  Rng rng(derive_seed(seed, Stream::init));
  for (std::size_t d = 0; d + 1 < w.size(); ++d) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(w[d]));
    for (auto& v : params.layer(2 * d).values) v = rng.normal(0.0, stddev);
  }
  return params;
}

struct LossResult {
  double loss = 0.0;         // mean cross-entropy
  std::size_t correct = 0;  // argmax hits
};

namespace detail {

inline double activate(Activation a, double z) { return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

// Derivative expressed through the activation output.
inline double activate_grad(Activation a, double z, double out) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

// Forward (and optionally backward) pass over a batch given by sample
// pointers. grad, when non-null, receives the gradient of the mean loss.
inline LossResult run_batch(const LayeredParams& params, const ModelArch& arch, std::span<const Sample* const> batch,
                            LayeredParams* grad) {
  if (batch.empty()) throw ConfigError("empty batch");
  const auto widths = arch.widths();
  const std::size_t n_dense = arch.dense_layers();
  if (params.num_layers() != 2 * n_dense) throw StructuralError("params do not match model architecture");

  // pre[d] / act[d]: pre-activation and output of dense layer d; act[-1] is the input.
  std::vector<std::vector<double>> pre(n_dense), act(n_dense);
  for (std::size_t d = 0; d < n_dense; ++d) {
    pre[d].resize(static_cast<std::size_t>(widths[d + 1]));
    act[d].resize(static_cast<std::size_t>(widths[d + 1]));
  }
  std::vector<std::vector<double>> delta(n_dense);
  for (std::size_t d = 0; d < n_dense; ++d) delta[d].resize(static_cast<std::size_t>(widths[d + 1]));

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossResult result;
  for (const Sample* sample : batch) {
    if (sample->pixels.size() != static_cast<std::size_t>(arch.input_dim))
      throw StructuralError("sample has " + std::to_string(sample->pixels.size()) + " pixels, model expects " +
                            std::to_string(arch.input_dim));
    for (std::size_t d = 0; d < n_dense; ++d) {
      const auto& weight = params.layer(2 * d).values;
      const auto& bias = params.layer(2 * d + 1).values;
      const std::vector<double>& in = d == 0 ? sample->pixels : act[d - 1];
      const std::size_t n_in = in.size();
      const bool last = d + 1 == n_dense;
      for (std::size_t o = 0; o < pre[d].size(); ++o) {
        const double* row = weight.data() + o * n_in;
        double z = bias[o];
        for (std::size_t k = 0; k < n_in; ++k) z += row[k] * in[k];
        pre[d][o] = z;
        act[d][o] = last ? z : activate(arch.activation, z);
      }
    }

    // Softmax cross-entropy on the logits, computed stably.
    const auto& logits = act[n_dense - 1];
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - max_logit);
    const double log_denom = std::log(denom) + max_logit;
    const auto label = static_cast<std::size_t>(sample->label);
    if (label >= logits.size()) throw StructuralError("label out of range");
    result.loss += (log_denom - logits[label]) * inv_n;
    if (argmax_lowest(logits) == label) ++result.correct;

    if (grad == nullptr) continue;
    auto& top = delta[n_dense - 1];
    for (std::size_t c = 0; c < logits.size(); ++c)
      top[c] = std::exp(logits[c] - log_denom) - (c == label ? 1.0 : 0.0);
    for (std::size_t d = n_dense; d-- > 0;) {
      const std::vector<double>& in = d == 0 ? sample->pixels : act[d - 1];
      const std::size_t n_in = in.size();
      auto& gw = grad->layer(2 * d).values;
      auto& gb = grad->layer(2 * d + 1).values;
      for (std::size_t o = 0; o < delta[d].size(); ++o) {
        const double g = delta[d][o] * inv_n;
        if (g == 0.0) continue;
        gb[o] += g;
        double* grow = gw.data() + o * n_in;
        for (std::size_t k = 0; k < n_in; ++k) grow[k] += g * in[k];
      }
      if (d == 0) break;
      const auto& weight = params.layer(2 * d).values;
      auto& below = delta[d - 1];
      std::fill(below.begin(), below.end(), 0.0);
      for (std::size_t o = 0; o < delta[d].size(); ++o) {
        const double g = delta[d][o];
        if (g == 0.0) continue;
        const double* row = weight.data() + o * n_in;
        for (std::size_t k = 0; k < n_in; ++k) below[k] += g * row[k];
      }
      for (std::size_t k = 0; k < below.size(); ++k)
        below[k] *= activate_grad(arch.activation, pre[d - 1][k], act[d - 1][k]);
    }
  }
  if (std::isnan(result.loss)) throw NumericError("loss is NaN");
  return result;
}

inline std::vector<const Sample*> pointers(std::span<const Sample> batch) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return ptrs;
}

}  // namespace detail

inline LossResult forward_loss(const LayeredParams& params, const ModelArch& arch, std::span<const Sample> batch) {
  const auto ptrs = detail::pointers(batch);
  return detail::run_batch(params, arch, ptrs, nullptr);
}

// Gradient of the mean cross-entropy over the batch.
inline LayeredParams backward(const LayeredParams& params, const ModelArch& arch, std::span<const Sample> batch) {
  const auto ptrs = detail::pointers(batch);
  auto grad = LayeredParams::zeros(params.arch());
  detail::run_batch(params, arch, ptrs, &grad);
  return grad;
}

// Identifies one local training job; the shuffle stream is derived from it.
struct TrainContext {
  int round = 1;
  int client = 1;
  std::uint64_t seed = 0;
};

// Mini-batch SGD from params_in for cfg.local_epochs over the dataset.
inline LayeredParams local_train(const LayeredParams& params_in, const ModelArch& arch, const Dataset& data,
                                 const TrainConfig& cfg, const TrainContext& ctx) {
  if (data.empty()) throw ConfigError("local_train: empty dataset for client " + std::to_string(ctx.client));
  cfg.validate();
  LayeredParams params = params_in;
  const double lr = cfg.lr_at(ctx.round);
  Rng rng(derive_seed(ctx.seed, Stream::training, static_cast<std::uint64_t>(ctx.round),
                      static_cast<std::uint64_t>(ctx.client)));
  std::vector<std::size_t> order(data.size());
  std::vector<const Sample*> batch;
  auto grad = LayeredParams::zeros(params.arch());
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      batch.clear();
      for (std::size_t s = start; s < std::min(order.size(), start + batch_size); ++s)
        batch.push_back(&data.samples[order[s]]);
      for (std::size_t j = 0; j < grad.num_layers(); ++j) {
        auto& g = grad.layer(j).values;
        std::fill(g.begin(), g.end(), 0.0);
      }
      LossResult r;
      try {
        r = detail::run_batch(params, arch, batch, &grad);
      } catch (const NumericError& e) {
        throw TrainingError(ctx.round, ctx.client, e.what());
      }
      if (!std::isfinite(r.loss)) throw TrainingError(ctx.round, ctx.client, "non-finite loss");
      add_scaled(params, grad, -lr);
    }
  }
  return params;
}

// Fraction of samples whose argmax prediction (lowest index on ties) is correct.
inline double accuracy(const LayeredParams& params, const ModelArch& arch, const Dataset& data) {
  if (data.empty()) throw ConfigError("accuracy: empty dataset");
  const auto ptrs = detail::pointers(data.samples);
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < ptrs.size(); start += kChunk) {
    const auto n = std::min(kChunk, ptrs.size() - start);
    correct += detail::run_batch(params, arch, std::span(ptrs).subspan(start, n), nullptr).correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace coast
