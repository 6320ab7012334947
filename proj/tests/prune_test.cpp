#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "coast/oracle.hpp"
#include "coast/prune.hpp"
#include "test_util.hpp"

namespace coast {
namespace {

LayeredParams one_layer(std::vector<double> v) { return LayeredParams({Layer{"w", std::move(v)}}); }

std::vector<double> prune_values(std::vector<double> v, double r, PruneConfig cfg = {}) {
  cfg.ratio_percent = r;
  return prune(one_layer(std::move(v)), cfg).layer(0).values;
}

TEST(PruneTest, KeepsLargestMagnitudes) {
  EXPECT_EQ(prune_values({0.5, -0.3, 0.1, 0.05}, 50), (std::vector<double>{1, -1, 0, 0}));
}

TEST(PruneTest, ZeroUpdateStaysZero) {
  EXPECT_EQ(prune_values({0, 0, 0, 0}, 50), (std::vector<double>{0, 0, 0, 0}));
}

TEST(PruneTest, FullRatioIsSignQuantization) {
  EXPECT_EQ(prune_values({0.2, -7, 0, 1e-9}, 100), (std::vector<double>{1, -1, 0, 1}));
}

TEST(PruneTest, TiesGoToLowerIndex) {
  EXPECT_EQ(prune_values({0.1, -0.3, 0.3, 0.3, -0.3}, 40), (std::vector<double>{0, -1, 1, 0, 0}));
  EXPECT_EQ(select_indices(std::vector<double>{1, 1, 1, 1}, 50, Selection::by_abs),
            (std::vector<std::size_t>{0, 1}));
}

TEST(PruneTest, SelectedCountFloors) {
  EXPECT_EQ(selected_count(10, 10), 1u);
  EXPECT_EQ(selected_count(9, 10), 0u);
  EXPECT_EQ(selected_count(100, 10), 10u);
  EXPECT_EQ(selected_count(1000, 0.7), 7u);
  EXPECT_EQ(selected_count(3, 100), 3u);
  EXPECT_EQ(selected_count(0, 50), 0u);
}

TEST(PruneTest, SmallLayerIsZeroedAndReported) {
  EXPECT_EQ(prune_values({0.9, -0.9, 0.5}, 10), (std::vector<double>{0, 0, 0}));
  const Architecture arch{{"big", 100}, {"small", 4}, {"empty", 0}};
  EXPECT_EQ(fully_pruned_layers(arch, 10), (std::vector<std::string>{"small"}));
}

TEST(PruneTest, EmptyLayerAllowed) {
  const LayeredParams p({Layer{"a", {}}, Layer{"b", {1.0, -2.0}}});
  PruneConfig cfg;
  cfg.ratio_percent = 50;
  const auto out = prune(p, cfg);
  EXPECT_TRUE(out.layer(0).values.empty());
  EXPECT_EQ(out.layer(1).values, (std::vector<double>{0, -1}));
}

TEST(PruneTest, LayersArePrunedIndependently) {
  const LayeredParams p({Layer{"a", {10, 20}}, Layer{"b", {0.1, -0.2}}});
  PruneConfig cfg;
  cfg.ratio_percent = 50;
  const auto out = prune(p, cfg);
  EXPECT_EQ(out.layer(0).values, (std::vector<double>{0, 1}));
  EXPECT_EQ(out.layer(1).values, (std::vector<double>{0, -1}));
}

TEST(PruneTest, SelectionAndClipVariants) {
  PruneConfig cfg;
  cfg.selection = Selection::by_value;
  EXPECT_EQ(prune_values({0.5, -0.3, 0.1, 0.05}, 50, cfg), (std::vector<double>{1, 0, 1, 0}));
  cfg = {};
  cfg.clip = Clip::none;
  EXPECT_EQ(prune_values({0.5, -0.3, 0.1, 0.05}, 50, cfg), (std::vector<double>{0.5, -0.3, 0, 0}));
  EXPECT_EQ(cfg.step(), 1.0);
  cfg.clip = Clip::layer_mean;
  const auto lm = prune_values({0.5, -0.3, 0.1, 0.05}, 50, cfg);
  EXPECT_DOUBLE_EQ(lm[0], 0.4);
  EXPECT_DOUBLE_EQ(lm[1], -0.4);
  EXPECT_EQ(PruneConfig{}.step(), 0.02);
}

TEST(PruneTest, InvalidConfig) {
  PruneConfig cfg;
  for (double r : {0.0, -1.0, 100.5, std::nan("")}) {
    cfg.ratio_percent = r;
    EXPECT_THROW(prune(one_layer({1.0}), cfg), ConfigError) << r;
  }
  cfg = {};
  cfg.alpha = 0.0;
  EXPECT_THROW(prune(one_layer({1.0}), cfg), ConfigError);
  EXPECT_THROW(prune(one_layer({std::nan("")}), PruneConfig{}), NumericError);
}

TEST(PruneTest, NameRoundTrip) {
  for (auto s : {Selection::by_abs, Selection::by_value}) EXPECT_EQ(parse_selection(to_string(s)), s);
  for (auto c : {Clip::sign_clip, Clip::none, Clip::layer_mean}) EXPECT_EQ(parse_clip(to_string(c)), c);
}

TEST(PrunePropertyTest, RandomLayersMatchSortOracle) {
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(512);
    const double r = static_cast<double>(1 + rng.below(1000)) / 10.0;
    std::vector<double> v(n);
    // Quantized values make exact ties common.
    for (auto& x : v) x = trial % 2 ? rng.uniform(-1, 1) : static_cast<double>(rng.below(7)) - 3.0;
    const auto out = prune_values(v, r);
    const auto m = selected_count(n, r);
    ASSERT_EQ(m, static_cast<std::size_t>(std::floor(static_cast<double>(n) * r / 100.0 + 1e-9)));
    ASSERT_EQ(out, oracle::prune_layer_by_sort(v, m)) << "n=" << n << " r=" << r;

    const auto sel = select_indices(v, r, Selection::by_abs);
    ASSERT_EQ(sel.size(), m);
    std::vector<bool> chosen(n, false);
    double min_sel = INFINITY, max_rest = -INFINITY;
    for (auto i : sel) {
      chosen[i] = true;
      min_sel = std::min(min_sel, std::fabs(v[i]));
    }
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_TRUE(out[i] == -1.0 || out[i] == 0.0 || out[i] == 1.0);
      if (out[i] != 0.0) ASSERT_TRUE(chosen[i] && v[i] != 0.0);
      if (!chosen[i]) max_rest = std::max(max_rest, std::fabs(v[i]));
    }
    if (m > 0 && m < n) ASSERT_GE(min_sel, max_rest);
  }
}

}  // namespace
}  // namespace coast
