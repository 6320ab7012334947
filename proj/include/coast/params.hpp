#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coast/error.hpp"

namespace coast {

// One named parameter tensor, stored flat.
struct Layer {
  std::string name;
  std::vector<double> values;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct LayerShape {
  std::string name;
  std::size_t size = 0;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

using Architecture = std::vector<LayerShape>;

inline std::size_t total_len(const Architecture& arch) {
  std::size_t n = 0;
  for (const auto& s : arch) n += s.size;
  return n;
}

// Position of a scalar in the concatenation of all layers, in declared order.
struct GlobalIndex {
  std::size_t h = 0;
};

// Ordered list of named layers. Binary operations require identical layer
// names and lengths on both sides.
class LayeredParams {
 public:
  LayeredParams() = default;
  explicit LayeredParams(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  static LayeredParams zeros(const Architecture& arch) {
    std::vector<Layer> layers;
    layers.reserve(arch.size());
    for (const auto& s : arch) layers.push_back({s.name, std::vector<double>(s.size, 0.0)});
    return LayeredParams(std::move(layers));
  }

  std::size_t num_layers() const { return layers_.size(); }
  std::span<const Layer> layers() const { return layers_; }
  const Layer& layer(std::size_t j) const { return layers_.at(j); }
  Layer& layer(std::size_t j) { return layers_.at(j); }

  std::size_t total_len() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.values.size();
    return n;
  }

  Architecture arch() const {
    Architecture a;
    a.reserve(layers_.size());
    for (const auto& l : layers_) a.push_back({l.name, l.values.size()});
    return a;
  }

  bool same_arch(const LayeredParams& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
      if (layers_[j].name != other.layers_[j].name ||
          layers_[j].values.size() != other.layers_[j].values.size())
        return false;
    }
    return true;
  }

  double at(GlobalIndex index) const {
    std::size_t h = index.h;
    for (const auto& l : layers_) {
      if (h < l.values.size()) return l.values[h];
      h -= l.values.size();
    }
    throw StructuralError("global index " + std::to_string(index.h) + " out of range (total_len " +
                          std::to_string(total_len()) + ")");
  }

  // Offset of layer j in the flat ordering.
  std::size_t offset(std::size_t j) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < j && i < layers_.size(); ++i) off += layers_[i].values.size();
    return off;
  }

  friend bool operator==(const LayeredParams&, const LayeredParams&) = default;

 private:
  std::vector<Layer> layers_;
};

inline void require_same_arch(const LayeredParams& a, const LayeredParams& b, const char* op) {
  if (!a.same_arch(b))
    throw StructuralError(std::string(op) + ": architecture mismatch");
}

namespace detail {

template <typename F>
LayeredParams zip(const LayeredParams& a, const LayeredParams& b, const char* op, F f) {
  require_same_arch(a, b, op);
  LayeredParams out = a;
  for (std::size_t j = 0; j < a.num_layers(); ++j) {
    auto& dst = out.layer(j).values;
    const auto& rhs = b.layer(j).values;
    for (std::size_t m = 0; m < dst.size(); ++m) dst[m] = f(dst[m], rhs[m]);
  }
  return out;
}

template <typename F>
LayeredParams map(const LayeredParams& a, F f) {
  LayeredParams out = a;
  for (std::size_t j = 0; j < out.num_layers(); ++j)
    for (auto& v : out.layer(j).values) v = f(v);
  return out;
}

}  // namespace detail

inline LayeredParams add(const LayeredParams& a, const LayeredParams& b) {
  return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}

inline LayeredParams sub(const LayeredParams& a, const LayeredParams& b) {
  return detail::zip(a, b, "sub", [](double x, double y) { return x - y; });
}

inline LayeredParams scale(const LayeredParams& a, double c) {
  return detail::map(a, [c](double x) { return x * c; });
}

// acc += c * x, in place.
inline void add_scaled(LayeredParams& acc, const LayeredParams& x, double c) {
  require_same_arch(acc, x, "add_scaled");
  for (std::size_t j = 0; j < acc.num_layers(); ++j) {
    auto& dst = acc.layer(j).values;
    const auto& src = x.layer(j).values;
    for (std::size_t m = 0; m < dst.size(); ++m) dst[m] += c * src[m];
  }
}

// -1, 0 or +1. sgn(0) == 0 and sgn(-0.0) == 0.
inline double sign_of(double x) {
  if (std::isnan(x)) throw NumericError("sgn of NaN");
  return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

inline LayeredParams sgn(const LayeredParams& a) { return detail::map(a, sign_of); }

inline std::vector<double> flatten(const LayeredParams& a) {
  std::vector<double> flat;
  flat.reserve(a.total_len());
  for (const auto& l : a.layers()) flat.insert(flat.end(), l.values.begin(), l.values.end());
  return flat;
}

inline LayeredParams unflatten(std::span<const double> flat, const Architecture& arch) {
  if (flat.size() != total_len(arch))
    throw StructuralError("unflatten: got " + std::to_string(flat.size()) + " scalars, architecture has " +
                          std::to_string(total_len(arch)));
  std::vector<Layer> layers;
  layers.reserve(arch.size());
  std::size_t off = 0;
  for (const auto& s : arch) {
    layers.push_back({s.name, std::vector<double>(flat.begin() + off, flat.begin() + off + s.size)});
    off += s.size;
  }
  return LayeredParams(std::move(layers));
}

// Largest elementwise absolute difference.
inline double max_abs_diff(const LayeredParams& a, const LayeredParams& b) {
  require_same_arch(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t j = 0; j < a.num_layers(); ++j) {
    const auto& x = a.layer(j).values;
    const auto& y = b.layer(j).values;
    for (std::size_t m = 0; m < x.size(); ++m) worst = std::max(worst, std::abs(x[m] - y[m]));
  }
  return worst;
}

}  // namespace coast
