#pragma once

// Experiment configuration: a flat "key = value" document.
//
// Lines starting with '#' and blank lines are ignored. Unknown keys and
// malformed values are errors; validation reports every violated field at
// once. Values resolve with precedence  flags > environment > file > defaults,
// where the environment variable for key `foo_bar` is COAST_FOO_BAR.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "coast/baselines.hpp"
#include "coast/cross_round.hpp"
#include "coast/error.hpp"
#include "coast/flengine.hpp"
#include "coast/io.hpp"
#include "coast/model.hpp"
#include "coast/prune.hpp"
#include "coast/synthdata.hpp"

namespace coast {

enum class Method { coast, cgsv, shapley, loo };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::coast: return "coast";
    case Method::cgsv: return "cgsv";
    case Method::shapley: return "shapley";
    case Method::loo: return "loo";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "coast") return Method::coast;
  if (s == "cgsv") return Method::cgsv;
  if (s == "shapley" || s == "sv") return Method::shapley;
  if (s == "loo" || s == "leave_one_out") return Method::loo;
  return std::nullopt;
}

struct ExperimentConfig {
  int clients = 5;
  int rounds = 60;
  Setting setting = Setting::quantity;
  AggregationKind aggregation = AggregationKind::coast_pruned;
  PruneConfig prune;
  ValuationConfig valuation;
  ModelArch arch;  // input_dim follows height * width, classes follows `classes`
  int height = 16;
  int width = 16;
  int train_samples = 2000;
  int val_samples = 200;
  TrainConfig train;
  std::uint64_t seed = 1;
  int seeds = 1;
  std::vector<Method> methods{Method::coast, Method::cgsv, Method::shapley, Method::loo};
  int jobs = 1;
  std::string out = "out";

  bool has_method(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

  ImageShape image() const { return {height, width, arch.classes}; }

  RoundSetup round_setup(std::uint64_t run_seed) const {
    return {arch, train, {aggregation, prune}, run_seed, jobs};
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> items;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !items.empty()) items.push_back(trim(cur));
  return items;
}

// One entry per config key: how to print it and how to set it from text.
struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<bool(ExperimentConfig&, std::string_view)> set;
};

template <typename T>
Field int_field(std::string key, T ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member](ExperimentConfig& c, std::string_view v) {
            auto n = parse_number<T>(v);
            if (!n) return false;
            c.*member = *n;
            return true;
          }};
}

template <typename Get, typename Set>
Field field(std::string key, Get get, Set set) {
  return {std::move(key), get, set};
}

template <typename Ref>
Field double_field(std::string key, Ref ref) {
  return field(
      key, [ref](const ExperimentConfig& c) { return format_double(ref(const_cast<ExperimentConfig&>(c))); },
      [ref](ExperimentConfig& c, std::string_view v) {
        auto n = parse_number<double>(v);
        if (!n) return false;
        ref(c) = *n;
        return true;
      });
}

template <typename Ref>
Field int_ref_field(std::string key, Ref ref) {
  return field(
      key, [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); },
      [ref](ExperimentConfig& c, std::string_view v) {
        auto n = parse_number<int>(v);
        if (!n) return false;
        ref(c) = *n;
        return true;
      });
}

template <typename Ref, typename Parse>
Field enum_field(std::string key, Ref ref, Parse parse) {
  return field(
      key, [ref](const ExperimentConfig& c) { return std::string(to_string(ref(const_cast<ExperimentConfig&>(c)))); },
      [ref, parse](ExperimentConfig& c, std::string_view v) {
        auto e = parse(v);
        if (!e) return false;
        ref(c) = *e;
        return true;
      });
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("clients", &ExperimentConfig::clients));
    f.push_back(int_field("rounds", &ExperimentConfig::rounds));
    f.push_back(enum_field("setting", [](ExperimentConfig& c) -> Setting& { return c.setting; }, parse_setting));
    f.push_back(enum_field("aggregation", [](ExperimentConfig& c) -> AggregationKind& { return c.aggregation; },
                           parse_aggregation));
    f.push_back(double_field("ratio", [](ExperimentConfig& c) -> double& { return c.prune.ratio_percent; }));
    f.push_back(double_field("alpha", [](ExperimentConfig& c) -> double& { return c.prune.alpha; }));
    f.push_back(enum_field("selection", [](ExperimentConfig& c) -> Selection& { return c.prune.selection; },
                           parse_selection));
    f.push_back(enum_field("clip", [](ExperimentConfig& c) -> Clip& { return c.prune.clip; }, parse_clip));
    f.push_back(int_ref_field("k", [](ExperimentConfig& c) -> int& { return c.valuation.window; }));
    f.push_back(enum_field("valuation", [](ExperimentConfig& c) -> ValuationMode& { return c.valuation.mode; },
                           parse_valuation_mode));
    f.push_back(enum_field("tail", [](ExperimentConfig& c) -> TailPolicy& { return c.valuation.tail; },
                           parse_tail_policy));
    f.push_back(int_field("height", &ExperimentConfig::height));
    f.push_back(int_field("width", &ExperimentConfig::width));
    f.push_back(int_ref_field("classes", [](ExperimentConfig& c) -> int& { return c.arch.classes; }));
    f.push_back(field(
        "hidden",
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.arch.hidden_dims.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.arch.hidden_dims[i]);
          return s;
        },
        [](ExperimentConfig& c, std::string_view v) {
          std::vector<int> dims;
          for (const auto& item : split_list(v)) {
            auto n = parse_number<int>(item);
            if (!n) return false;
            dims.push_back(*n);
          }
          c.arch.hidden_dims = std::move(dims);
          return true;
        }));
    f.push_back(enum_field("activation", [](ExperimentConfig& c) -> Activation& { return c.arch.activation; },
                           parse_activation));
    f.push_back(int_field("train_samples", &ExperimentConfig::train_samples));
    f.push_back(int_field("val_samples", &ExperimentConfig::val_samples));
    f.push_back(double_field("learning_rate", [](ExperimentConfig& c) -> double& { return c.train.learning_rate; }));
    f.push_back(double_field("lr_decay", [](ExperimentConfig& c) -> double& { return c.train.lr_decay; }));
    f.push_back(int_ref_field("batch_size", [](ExperimentConfig& c) -> int& { return c.train.batch_size; }));
    f.push_back(int_ref_field("local_epochs", [](ExperimentConfig& c) -> int& { return c.train.local_epochs; }));
    f.push_back(int_field("seed", &ExperimentConfig::seed));
    f.push_back(int_field("seeds", &ExperimentConfig::seeds));
    f.push_back(field(
        "methods",
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.methods.size(); ++i) s += (i ? "," : "") + std::string(to_string(c.methods[i]));
          return s;
        },
        [](ExperimentConfig& c, std::string_view v) {
          std::vector<Method> ms;
          for (const auto& item : split_list(v)) {
            auto m = parse_method(item);
            if (!m) return false;
            if (std::find(ms.begin(), ms.end(), *m) == ms.end()) ms.push_back(*m);
          }
          c.methods = std::move(ms);
          return true;
        }));
    f.push_back(int_field("jobs", &ExperimentConfig::jobs));
    f.push_back(field(
        "out", [](const ExperimentConfig& c) { return c.out; },
        [](ExperimentConfig& c, std::string_view v) {
          c.out = std::string(v);
          return !c.out.empty();
        }));
    return f;
  }();
  return table;
}

// Keys that only affect where and how fast a run executes, not its results.
inline bool is_runtime_key(std::string_view key) { return key == "jobs" || key == "out"; }

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : config_detail::fields()) keys.push_back(f.key);
  return keys;
}

// Applies one key/value pair. Returns an error message, or empty on success.
inline std::string set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : config_detail::fields()) {
    if (f.key != key) continue;
    if (!f.set(cfg, config_detail::trim(value))) return "invalid value '" + std::string(value) + "' for " + f.key;
    return {};
  }
  return "unknown key '" + std::string(key) + "'";
}

// Derived fields that mirror others.
inline void sync_derived(ExperimentConfig& cfg) { cfg.arch.input_dim = cfg.height * cfg.width; }

// Every violated constraint, one message each.
inline std::vector<std::string> config_violations(const ExperimentConfig& c) {
  std::vector<std::string> v;
  auto check = [&](bool ok, std::string msg) {
    if (!ok) v.push_back(std::move(msg));
  };
  check(c.clients >= 1, "clients must be >= 1");
  check(c.rounds >= 1, "rounds must be >= 1");
  check(c.prune.ratio_percent > 0.0 && c.prune.ratio_percent <= 100.0, "ratio must be in (0, 100]");
  check(c.prune.alpha > 0.0, "alpha must be > 0");
  check(c.valuation.window >= 1, "k must be >= 1");
  check(c.height >= 1 && c.width >= 1 && c.height * c.width >= 16, "height * width must be >= 16");
  check(c.arch.classes >= 2, "classes must be >= 2");
  for (int h : c.arch.hidden_dims) check(h >= 1, "hidden dimensions must be >= 1");
  check(c.val_samples >= c.arch.classes, "val_samples must be >= classes");
  check(c.train_samples >= std::max(c.clients, c.arch.classes), "train_samples must be >= max(clients, classes)");
  check(c.train.learning_rate >= 0.0, "learning_rate must be >= 0");
  check(c.train.lr_decay > 0.0, "lr_decay must be > 0");
  check(c.train.batch_size >= 1, "batch_size must be >= 1");
  check(c.train.local_epochs >= 0, "local_epochs must be >= 0");
  check(c.seeds >= 1, "seeds must be >= 1");
  check(c.jobs >= 1, "jobs must be >= 1");
  check(!c.methods.empty(), "methods must name at least one method");
  if (c.has_method(Method::shapley) || c.has_method(Method::loo))
    check(c.clients <= kMaxExactShapleyClients,
          "clients must be <= " + std::to_string(kMaxExactShapleyClients) + " when shapley/loo are enabled");
  if (c.setting == Setting::resolution)
    check(2 * c.clients + 1 <= std::min(c.height, c.width),
          "resolution setting needs blur kernel 2*clients+1 <= min(height, width)");
  if (c.has_method(Method::coast)) check(c.rounds >= 2, "coast assessment needs rounds >= 2");
  return v;
}

inline void validate(const ExperimentConfig& cfg) {
  const auto v = config_violations(cfg);
  if (v.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& m : v) msg += "\n  - " + m;
  throw ConfigError(msg);
}

// Applies a document's key/value lines. Errors are collected, not thrown.
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text, std::string_view origin,
                              std::vector<std::string>& errors) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = config_detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const auto err = set_config_value(cfg, config_detail::trim(t.substr(0, eq)), config_detail::trim(t.substr(eq + 1)));
    if (!err.empty()) errors.push_back(where + err);
  }
}

inline std::string env_var_name(std::string_view key) {
  std::string name = "COAST_";
  for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

// defaults <- file <- environment <- flag overrides, then validation.
inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                                    const std::vector<std::pair<std::string, std::string>>& overrides = {},
                                    const EnvLookup& env = process_env) {
  ExperimentConfig cfg;
  std::vector<std::string> errors;
  if (path) {
    if (!std::filesystem::exists(*path)) throw IoError("config file not found: " + path->string());
    apply_config_text(cfg, read_file_text(*path), path->string(), errors);
  }
  if (env) {
    for (const auto& key : config_keys()) {
      if (auto v = env(env_var_name(key))) {
        const auto err = set_config_value(cfg, key, *v);
        if (!err.empty()) errors.push_back(env_var_name(key) + ": " + err);
      }
    }
  }
  for (const auto& [key, value] : overrides) {
    const auto err = set_config_value(cfg, key, value);
    if (!err.empty()) errors.push_back("flag: " + err);
  }
  sync_derived(cfg);
  auto violations = config_violations(cfg);
  errors.insert(errors.end(), violations.begin(), violations.end());
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

// Parses a document against defaults (no environment), then validates.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::vector<std::string> errors;
  apply_config_text(cfg, text, "<config>", errors);
  sync_derived(cfg);
  auto violations = config_violations(cfg);
  errors.insert(errors.end(), violations.begin(), violations.end());
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

// Every key in a fixed order. Without runtime keys the text depends only on
// what determines results, so it is safe to embed in reports and logs.
inline std::string serialize_config(const ExperimentConfig& cfg, bool include_runtime = true) {
  std::string text;
  for (const auto& f : config_detail::fields()) {
    if (!include_runtime && config_detail::is_runtime_key(f.key)) continue;
    text += f.key + " = " + f.get(cfg) + "\n";
  }
  return text;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(serialize_config(cfg, false))); }

}  // namespace coast
