#pragma once

// Procedural image-classification data and the four client degradation
// settings (quantity, additive noise, blur, masking). Client 1 always holds
// the least degraded data, so the ground-truth ranking is 1..N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coast/error.hpp"
#include "coast/io.hpp"
#include "coast/random.hpp"
#include "coast/snapshot.hpp"

namespace coast {

struct ImageShape {
  int height = 16;
  int width = 16;
  int classes = 4;

  int pixels() const { return height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct Sample {
  std::vector<double> pixels;  // row-major, height x width, each in [0, 1]
  int label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  ImageShape shape;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

using ClientDataset = Dataset;

enum class Setting { quantity, noise, resolution, mask };

inline std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::quantity: return "quantity";
    case Setting::noise: return "noise";
    case Setting::resolution: return "resolution";
    case Setting::mask: return "mask";
  }
  return "?";
}

inline std::optional<Setting> parse_setting(std::string_view s) {
  if (s == "quantity") return Setting::quantity;
  if (s == "noise") return Setting::noise;
  if (s == "resolution" || s == "blur") return Setting::resolution;
  if (s == "mask") return Setting::mask;
  return std::nullopt;
}

// Knobs of the base generator. The defaults give a 4-class 16x16 task a
// one-hidden-layer MLP learns to roughly 85-90% held-out accuracy.
struct BaseGenConfig {
  int template_bumps = 6;           // Gaussian bumps per class template
  double template_amplitude = 0.22;  // peak contrast of a bump
  int jitter_bumps = 4;             // smooth per-sample distortion
  double jitter_amplitude = 0.18;
  double pixel_noise = 0.12;        // white per-pixel jitter std
};

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Sum of random Gaussian bumps of random sign, centered anywhere on the grid.
inline std::vector<double> smooth_field(Rng& rng, int h, int w, int bumps, double amplitude) {
  std::vector<double> field(static_cast<std::size_t>(h * w), 0.0);
  for (int b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(0.0, h - 1.0);
    const double cx = rng.uniform(0.0, w - 1.0);
    const double width = rng.uniform(1.5, 0.3 * std::min(h, w));
    const double amp = amplitude * (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        field[static_cast<std::size_t>(y * w + x)] += amp * std::exp(-d2 / (2.0 * width * width));
      }
  }
  return field;
}

}  // namespace detail

// Labels cycle 0, 1, ..., C-1 so every contiguous slice is balanced within 1.
inline Dataset generate_base(std::uint64_t seed, std::size_t n_samples, int height, int width, int classes,
                             const BaseGenConfig& gen = {}) {
  if (classes < 2) throw ConfigError("generate_base: need at least 2 classes");
  if (height < 1 || width < 1 || height * width < 16)
    throw ConfigError("generate_base: image must have at least 16 pixels");
  if (n_samples < static_cast<std::size_t>(classes))
    throw ConfigError("generate_base: n_samples (" + std::to_string(n_samples) + ") < classes (" +
                      std::to_string(classes) + ")");

  Dataset ds{{height, width, classes}, {}};
  std::vector<std::vector<double>> templates;
  for (int c = 0; c < classes; ++c) {
    Rng rng(derive_seed(seed, Stream::base_data, 0, static_cast<std::uint64_t>(c)));
    auto field = detail::smooth_field(rng, height, width, gen.template_bumps, gen.template_amplitude);
    for (auto& v : field) v += 0.5;
    templates.push_back(std::move(field));
  }

  ds.samples.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Rng rng(derive_seed(seed, Stream::base_data, 1, s));
    const int label = static_cast<int>(s % static_cast<std::size_t>(classes));
    auto jitter = detail::smooth_field(rng, height, width, gen.jitter_bumps, gen.jitter_amplitude);
    Sample sample{std::vector<double>(jitter.size()), label};
    for (std::size_t p = 0; p < jitter.size(); ++p)
      sample.pixels[p] = detail::clamp01(templates[static_cast<std::size_t>(label)][p] + jitter[p] +
                                         gen.pixel_noise * rng.normal());
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

struct BaseSplit {
  Dataset train;
  Dataset validation;
};

// The last n_val samples form the clean validation set; the rest is the
// pool every client draws its training data from.
inline BaseSplit split_base(const Dataset& base, std::size_t n_val) {
  const auto classes = static_cast<std::size_t>(base.shape.classes);
  if (n_val < classes)
    throw ConfigError("validation size (" + std::to_string(n_val) + ") must be at least the class count");
  if (n_val + classes > base.size())
    throw ConfigError("validation size (" + std::to_string(n_val) + ") exceeds the reserve of a base of " +
                      std::to_string(base.size()) + " samples");
  BaseSplit split{{base.shape, {}}, {base.shape, {}}};
  const std::size_t n_train = base.size() - n_val;
  split.train.samples.assign(base.samples.begin(), base.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.samples.assign(base.samples.begin() + static_cast<std::ptrdiff_t>(n_train), base.samples.end());
  return split;
}

inline Dataset make_validation(const Dataset& base, std::size_t n_val) { return split_base(base, n_val).validation; }

inline void check_client_index(int i, int n_clients) {
  if (n_clients < 1 || i < 1 || i > n_clients)
    throw ConfigError("client index " + std::to_string(i) + " outside [1, " + std::to_string(n_clients) + "]");
}

// floor((1 - 0.5 i/N) * n), evaluated in integers. i = 0 is allowed as the
// limit of the ramp.
inline std::size_t quantity_size(std::size_t n, int i, int n_clients) {
  const auto two_n = static_cast<std::size_t>(2 * n_clients);
  return n * (two_n - static_cast<std::size_t>(i)) / two_n;
}

// Client i draws its samples without replacement from the pool; clients
// draw independently, so their sets overlap.
inline Dataset partition_quantity(const Dataset& pool, int i, int n_clients, std::uint64_t seed) {
  if (pool.empty()) throw ConfigError("partition_quantity: empty pool");
  if (i != 0) check_client_index(i, n_clients);
  const std::size_t count = quantity_size(pool.size(), i, n_clients);
  if (count == 0) throw ConfigError("partition_quantity: client " + std::to_string(i) + " would get 0 samples");
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, Stream::client_draw, static_cast<std::uint64_t>(i)));
  rng.shuffle(idx);
  Dataset out{pool.shape, {}};
  out.samples.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.samples.push_back(pool.samples[idx[s]]);
  return out;
}

// Random even partition: one shuffle shared by all clients, client i takes
// the i-th slice of floor(n / N) samples.
inline Dataset partition_even(const Dataset& pool, int i, int n_clients, std::uint64_t seed) {
  check_client_index(i, n_clients);
  const std::size_t per = pool.size() / static_cast<std::size_t>(n_clients);
  if (per == 0) throw ConfigError("partition_even: fewer samples than clients");
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, Stream::partition));
  rng.shuffle(idx);
  Dataset out{pool.shape, {}};
  out.samples.reserve(per);
  const std::size_t begin = per * static_cast<std::size_t>(i - 1);
  for (std::size_t s = begin; s < begin + per; ++s) out.samples.push_back(pool.samples[idx[s]]);
  return out;
}

struct NoiseParams {
  double mean = 0.0;
  double stddev = 0.0;
};

inline NoiseParams noise_params(int i, int n_clients) {
  return {0.01 * i, 0.625 * static_cast<double>(i) / n_clients};
}

// Each pixel gets an independent Normal(mean, stddev^2) draw, then is clamped.
inline Dataset apply_noise(const Dataset& ds, const NoiseParams& noise, std::uint64_t seed, int client) {
  Dataset out = ds;
  for (std::size_t s = 0; s < out.size(); ++s) {
    Rng rng(derive_seed(seed, Stream::degradation, static_cast<std::uint64_t>(client), s));
    for (auto& p : out.samples[s].pixels) p = detail::clamp01(p + rng.normal(noise.mean, noise.stddev));
  }
  return out;
}

inline Dataset apply_noise(const Dataset& ds, int i, int n_clients, std::uint64_t seed) {
  return apply_noise(ds, noise_params(i, n_clients), seed, i);
}

struct BlurParams {
  int kernel_size = 1;
  double sigma = 1.0;
};

inline BlurParams blur_params(int i) { return {2 * i + 1, 0.4 * i + 1.0}; }

// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
inline std::vector<double> gaussian_taps(const BlurParams& blur) {
  const int half = blur.kernel_size / 2;
  std::vector<double> taps(static_cast<std::size_t>(blur.kernel_size));
  double sum = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double v = std::exp(-(k * k) / (2.0 * blur.sigma * blur.sigma));
    taps[static_cast<std::size_t>(k + half)] = v;
    sum += v;
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Reflect-101 border: ... c b | a b c ... | ... b a.
inline int reflect101(int pos, int len) {
  if (len == 1) return 0;
  while (pos < 0 || pos >= len) {
    if (pos < 0) pos = -pos;
    if (pos >= len) pos = 2 * len - 2 - pos;
  }
  return pos;
}

// Separable 2-D Gaussian convolution with reflect-101 padding.
inline Dataset apply_blur(const Dataset& ds, const BlurParams& blur) {
  const int h = ds.shape.height;
  const int w = ds.shape.width;
  if (blur.kernel_size < 1 || blur.kernel_size % 2 == 0)
    throw ConfigError("blur kernel size must be odd and positive");
  if (blur.kernel_size > std::min(h, w))
    throw ConfigError("blur kernel " + std::to_string(blur.kernel_size) + " larger than image " +
                      std::to_string(h) + "x" + std::to_string(w));
  const auto taps = gaussian_taps(blur);
  const int half = blur.kernel_size / 2;
  Dataset out = ds;
  std::vector<double> tmp(static_cast<std::size_t>(h * w));
  for (auto& sample : out.samples) {
    auto& px = sample.pixels;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k)
          acc += taps[static_cast<std::size_t>(k + half)] * px[static_cast<std::size_t>(y * w + reflect101(x + k, w))];
        tmp[static_cast<std::size_t>(y * w + x)] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k)
          acc += taps[static_cast<std::size_t>(k + half)] * tmp[static_cast<std::size_t>(reflect101(y + k, h) * w + x)];
        px[static_cast<std::size_t>(y * w + x)] = detail::clamp01(acc);
      }
  }
  return out;
}

inline Dataset apply_blur(const Dataset& ds, int i, int /*n_clients*/) { return apply_blur(ds, blur_params(i)); }

struct MaskBounds {
  double lo = 0.0;
  double hi = 0.0;
};

// Fractions of the image area.
inline MaskBounds mask_bounds(int i, int n_clients) {
  return {0.5 * static_cast<double>(i) / n_clients, 0.75 * static_cast<double>(i) / n_clients};
}

// Rectangle dimensions (rows, cols) with area closest to `area` that fit the
// image; one of the closest candidates is picked uniformly.
inline std::pair<int, int> mask_rectangle(int area, int h, int w, Rng& rng) {
  int best = -1;
  std::vector<std::pair<int, int>> candidates;
  for (int rows = 1; rows <= h; ++rows)
    for (int cols = 1; cols <= w; ++cols) {
      const int err = std::abs(rows * cols - area);
      if (best < 0 || err < best) {
        best = err;
        candidates.clear();
      }
      if (err == best) candidates.emplace_back(rows, cols);
    }
  return candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
}

// Per sample: fraction f ~ U[lo, hi], zero an axis-aligned rectangle of
// area floor(f * H * W) (nearest realizable) at a uniform random position.
inline Dataset apply_mask(const Dataset& ds, const MaskBounds& bounds, std::uint64_t seed, int client) {
  const int h = ds.shape.height;
  const int w = ds.shape.width;
  Dataset out = ds;
  for (std::size_t s = 0; s < out.size(); ++s) {
    Rng rng(derive_seed(seed, Stream::degradation, static_cast<std::uint64_t>(client), s));
    const double f = rng.uniform(bounds.lo, bounds.hi);
    const int area = static_cast<int>(std::floor(f * h * w));
    if (area <= 0) continue;
    const auto [rows, cols] = mask_rectangle(area, h, w, rng);
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - rows + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cols + 1)));
    auto& px = out.samples[s].pixels;
    for (int y = y0; y < y0 + rows; ++y)
      for (int x = x0; x < x0 + cols; ++x) px[static_cast<std::size_t>(y * w + x)] = 0.0;
  }
  return out;
}

inline Dataset apply_mask(const Dataset& ds, int i, int n_clients, std::uint64_t seed) {
  return apply_mask(ds, mask_bounds(i, n_clients), seed, i);
}

// Training data of client i (1-based) under a setting.
inline Dataset make_client_dataset(Setting setting, const Dataset& pool, int i, int n_clients, std::uint64_t seed) {
  check_client_index(i, n_clients);
  switch (setting) {
    case Setting::quantity: return partition_quantity(pool, i, n_clients, seed);
    case Setting::noise: return apply_noise(partition_even(pool, i, n_clients, seed), i, n_clients, seed);
    case Setting::resolution: return apply_blur(partition_even(pool, i, n_clients, seed), i, n_clients);
    case Setting::mask: return apply_mask(partition_even(pool, i, n_clients, seed), i, n_clients, seed);
  }
  throw ConfigError("unknown setting");
}

// Ground-truth contribution ranking: client i holds rank i.
inline std::vector<int> ground_truth_ranking(int n_clients) {
  std::vector<int> r(static_cast<std::size_t>(n_clients));
  std::iota(r.begin(), r.end(), 1);
  return r;
}

// Dataset file: "CDAT", u32 version, u32 height, u32 width, u32 classes,
// u64 n, n x (H*W f64 pixels), n x u32 labels, u64 FNV-1a checksum.
inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.bytes("CDAT");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(ds.shape.height));
  w.u32(static_cast<std::uint32_t>(ds.shape.width));
  w.u32(static_cast<std::uint32_t>(ds.shape.classes));
  w.u64(ds.size());
  for (const auto& s : ds.samples)
    for (double p : s.pixels) w.f64(p);
  for (const auto& s : ds.samples) w.u32(static_cast<std::uint32_t>(s.label));
  w.checksum_from(0);
  return w.take();
}

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != "CDAT") throw CorruptLogError("dataset: bad magic");
  if (r.u32() != 1) throw CorruptLogError("dataset: unsupported version");
  Dataset ds;
  ds.shape.height = static_cast<int>(r.u32());
  ds.shape.width = static_cast<int>(r.u32());
  ds.shape.classes = static_cast<int>(r.u32());
  const std::uint64_t n = r.u64();
  const auto px = static_cast<std::size_t>(ds.shape.pixels());
  if (px == 0 || n > r.remaining() / (8 * px)) throw CorruptLogError("dataset: sample count exceeds data");
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.pixels.resize(px);
    for (auto& p : s.pixels) p = r.f64();
  }
  for (auto& s : ds.samples) s.label = static_cast<int>(r.u32());
  r.verify_checksum_from(0, "dataset");
  return ds;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_file_bytes(path, encode_dataset(ds));
}

inline Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file_bytes(path)); }

}  // namespace coast
