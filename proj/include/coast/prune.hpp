#pragma once

// Layer-wise ternary pruning of a client update.
//
// For a layer with n elements, the top floor(n * r / 100) entries are
// selected and everything else is zeroed. With sign clipping the selected
// entries keep only their sign, so the pruned update lies in {-1, 0, +1};
// the aggregator then steps by alpha per vote.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coast/error.hpp"
#include "coast/params.hpp"

namespace coast {

enum class Selection {
  by_abs,                  // largest |delta| first
  by_value,  // largest signed delta first
};

enum class Clip {
  sign_clip,   // selected entries become sgn(delta)
  none,        // selected entries keep their raw value
  layer_mean,  // selected entries become sgn(delta) * mean |selected| of the layer
};

inline std::string_view to_string(Selection s) { return s == Selection::by_abs ? "by_abs" : "by_value"; }

inline std::optional<Selection> parse_selection(std::string_view s) {
  if (s == "by_abs") return Selection::by_abs;
  if (s == "by_value") return Selection::by_value;
  return std::nullopt;
}

inline std::string_view to_string(Clip c) {
  switch (c) {
    case Clip::sign_clip: return "sign_clip";
    case Clip::none: return "none";
    case Clip::layer_mean: return "layer_mean";
  }
  return "?";
}

inline std::optional<Clip> parse_clip(std::string_view s) {
  if (s == "sign_clip" || s == "sign") return Clip::sign_clip;
  if (s == "none") return Clip::none;
  if (s == "layer_mean") return Clip::layer_mean;
  return std::nullopt;
}

struct PruneConfig {
  double ratio_percent = 10.0;  // r in (0, 100]
  double alpha = 0.02;
  Selection selection = Selection::by_abs;
  Clip clip = Clip::sign_clip;

  void validate() const {
    if (!(ratio_percent > 0.0 && ratio_percent <= 100.0))
      throw ConfigError("pruning ratio must be in (0, 100], got " + std::to_string(ratio_percent));
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0, got " + std::to_string(alpha));
  }

  // Multiplier applied to the pruned update during aggregation. Only sign
  // clipping produces unit-magnitude votes that need alpha to set a step.
  double step() const { return clip == Clip::sign_clip ? alpha : 1.0; }

  friend bool operator==(const PruneConfig&, const PruneConfig&) = default;
};

// floor(n * r / 100), robust to r values such as 10 that are inexact in binary.
inline std::size_t selected_count(std::size_t n, double ratio_percent) {
  const double exact = static_cast<double>(n) * ratio_percent / 100.0;
  auto m = static_cast<std::size_t>(std::floor(exact + 1e-9));
  return std::min(m, n);
}

// Indices kept for one layer, in selection order. Ties go to the lower index.
inline std::vector<std::size_t> select_indices(std::span<const double> values, double ratio_percent,
                                               Selection selection) {
  const std::size_t m = selected_count(values.size(), ratio_percent);
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto key = [&](std::size_t i) { return selection == Selection::by_abs ? std::abs(values[i]) : values[i]; };
  auto before = [&](std::size_t a, std::size_t b) {
    const double ka = key(a), kb = key(b);
    return ka > kb || (ka == kb && a < b);
  };
  if (m < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(), before);
    idx.resize(m);
  }
  std::sort(idx.begin(), idx.end(), before);
  return idx;
}

// Pruned update of one client. Layers whose selection count is zero come
// back fully zeroed.
inline LayeredParams prune(const LayeredParams& delta, const PruneConfig& cfg) {
  cfg.validate();
  LayeredParams out = LayeredParams::zeros(delta.arch());
  for (std::size_t j = 0; j < delta.num_layers(); ++j) {
    const auto& src = delta.layer(j).values;
    for (double v : src)
      if (std::isnan(v)) throw NumericError("prune: NaN in layer " + delta.layer(j).name);
    auto& dst = out.layer(j).values;
    const auto selected = select_indices(src, cfg.ratio_percent, cfg.selection);
    double magnitude = 1.0;
    if (cfg.clip == Clip::layer_mean && !selected.empty()) {
      double sum = 0.0;
      for (std::size_t i : selected) sum += std::abs(src[i]);
      magnitude = sum / static_cast<double>(selected.size());
    }
    for (std::size_t i : selected) {
      switch (cfg.clip) {
        case Clip::sign_clip: dst[i] = sign_of(src[i]); break;
        case Clip::none: dst[i] = src[i]; break;
        case Clip::layer_mean: dst[i] = magnitude * sign_of(src[i]); break;
      }
    }
  }
  return out;
}

// Layers that prune() zeroes out entirely because floor(n * r / 100) == 0.
inline std::vector<std::string> fully_pruned_layers(const Architecture& arch, double ratio_percent) {
  std::vector<std::string> names;
  for (const auto& s : arch)
    if (s.size > 0 && selected_count(s.size, ratio_percent) == 0) names.push_back(s.name);
  return names;
}

}  // namespace coast
