#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "coast/config.hpp"
#include "coast/params.hpp"
#include "coast/random.hpp"

namespace coast::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("coast_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline LayeredParams random_params(const Architecture& arch, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto p = LayeredParams::zeros(arch);
  for (std::size_t j = 0; j < p.num_layers(); ++j)
    for (auto& v : p.layer(j).values) v = rng.uniform(lo, hi);
  return p;
}

// Small, fast experiment for integration tests.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.clients = 3;
  cfg.rounds = 4;
  cfg.height = 8;
  cfg.width = 8;
  cfg.arch.hidden_dims = {8};
  cfg.train_samples = 240;
  cfg.val_samples = 40;
  cfg.valuation.window = 2;
  sync_derived(cfg);
  return cfg;
}

}  // namespace coast::testing
