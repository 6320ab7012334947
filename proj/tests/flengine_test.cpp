#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "coast/cross_round.hpp"
#include "coast/experiment.hpp"
#include "coast/flengine.hpp"
#include "test_util.hpp"

namespace coast {
namespace {

LayeredParams two_layers(double a, double b, double c, double d) {
  return LayeredParams({Layer{"l0", {a, b}}, Layer{"l1", {c, d}}});
}

struct SmallRun {
  ExperimentConfig cfg;
  ClientData data;
  ExperimentRun run;
};

SmallRun small_run(AggregationKind kind = AggregationKind::coast_pruned, int rounds = 4, std::uint64_t seed = 1) {
  SmallRun r;
  r.cfg = testing::tiny_config();
  r.cfg.aggregation = kind;
  r.cfg.rounds = rounds;
  r.data = build_client_data(r.cfg, seed);
  r.run = run_experiment(init_params(r.cfg.arch, seed), r.data.clients, rounds, r.cfg.round_setup(seed));
  return r;
}

TEST(AggregateTest, HandComputedPrunedRound) {
  const auto global = two_layers(0.1, -0.2, 0.3, 0.0);
  const std::vector<LayeredParams> raw{two_layers(0.5, -0.01, 0.2, -0.3), two_layers(0.2, 0.3, 0.0, -0.1)};
  PruneConfig cfg;
  cfg.ratio_percent = 50;
  cfg.alpha = 0.02;
  std::vector<LayeredParams> pruned;
  for (const auto& d : raw) pruned.push_back(prune(d, cfg));
  EXPECT_EQ(pruned[0], two_layers(1, 0, 0, -1));
  EXPECT_EQ(pruned[1], two_layers(0, 1, 0, -1));
  const auto after = aggregate(global, pruned, cfg.step());
  EXPECT_LE(max_abs_diff(after, two_layers(0.11, -0.19, 0.3, -0.02)), 1e-15);
}

TEST(AggregateTest, ZeroUpdatesKeepGlobal) {
  const auto global = two_layers(1, 2, 3, 4);
  const std::vector<LayeredParams> zeros(3, LayeredParams::zeros(global.arch()));
  EXPECT_EQ(aggregate(global, zeros, 0.02), global);
  EXPECT_EQ(aggregate(global, zeros, 1.0), global);
  EXPECT_THROW(aggregate(global, std::span<const LayeredParams>{}, 1.0), ConfigError);
}

TEST(RunRoundTest, SingleClientPlainEqualsLocalModel) {
  auto cfg = testing::tiny_config();
  cfg.clients = 1;
  cfg.aggregation = AggregationKind::plain_fedavg;
  const auto data = build_client_data(cfg, 2);
  const auto global = init_params(cfg.arch, 2);
  const auto log = run_round(1, global, data.clients, cfg.round_setup(2));
  const auto local = local_train(global, cfg.arch, data.clients[0], cfg.train, {1, 1, 2});
  EXPECT_LE(max_abs_diff(log.global_after, local), 1e-12);
  EXPECT_FALSE(log.has_pruned());
}

TEST(RunRoundTest, ZeroEpochsLeaveGlobalUnchanged) {
  for (auto kind : {AggregationKind::plain_fedavg, AggregationKind::coast_pruned}) {
    auto cfg = testing::tiny_config();
    cfg.train.local_epochs = 0;
    cfg.aggregation = kind;
    const auto data = build_client_data(cfg, 3);
    const auto global = init_params(cfg.arch, 3);
    EXPECT_EQ(run_round(1, global, data.clients, cfg.round_setup(3)).global_after, global);
  }
}

TEST(RunRoundTest, ParallelMatchesSequential) {
  auto cfg = testing::tiny_config();
  const auto data = build_client_data(cfg, 4);
  const auto global = init_params(cfg.arch, 4);
  auto setup = cfg.round_setup(4);
  const auto a = run_round(1, global, data.clients, setup);
  setup.jobs = 3;
  EXPECT_EQ(run_round(1, global, data.clients, setup), a);
}

TEST(RunExperimentTest, PrunedInvariants) {
  const auto r = small_run();
  const double alpha = r.cfg.prune.alpha;
  for (const auto& log : r.run.logs) {
    ASSERT_TRUE(log.has_pruned());
    const double n = static_cast<double>(log.num_clients());
    auto expected = log.global_before;
    for (const auto& d : log.pruned_updates) add_scaled(expected, d, alpha / n);
    EXPECT_LE(max_abs_diff(log.global_after, expected), 1e-12);
    const auto votes = flatten(sub(log.global_after, log.global_before));
    for (double v : votes) {
      const double q = n * v / alpha;
      ASSERT_NEAR(q, std::round(q), 1e-9);
      ASSERT_LE(std::fabs(q), n + 1e-9);
    }
    for (std::size_t i = 0; i < log.num_clients(); ++i)
      EXPECT_EQ(log.pruned_updates[i], prune(log.raw_updates[i], r.cfg.prune));
  }
  EXPECT_EQ(r.run.final_params, r.run.logs.back().global_after);
}

TEST(RunExperimentTest, PlainIsMeanOfLocalModels) {
  const auto r = small_run(AggregationKind::plain_fedavg, 3);
  for (const auto& log : r.run.logs) {
    auto mean = LayeredParams::zeros(log.global_before.arch());
    for (std::size_t i = 0; i < log.num_clients(); ++i)
      add_scaled(mean, log.local_params(i), 1.0 / static_cast<double>(log.num_clients()));
    EXPECT_LE(max_abs_diff(log.global_after, mean), 1e-12);
  }
}

TEST(RunExperimentTest, OneRoundEqualsRunRound) {
  auto cfg = testing::tiny_config();
  const auto data = build_client_data(cfg, 5);
  const auto init = init_params(cfg.arch, 5);
  const auto run = run_experiment(init, data.clients, 1, cfg.round_setup(5));
  ASSERT_EQ(run.logs.size(), 1u);
  EXPECT_EQ(run.logs[0], run_round(1, init, data.clients, cfg.round_setup(5)));
  EXPECT_THROW(run_experiment(init, data.clients, 0, cfg.round_setup(5)), ConfigError);
}

TEST(RunExperimentTest, Deterministic) {
  EXPECT_EQ(small_run().run.logs, small_run().run.logs);
  EXPECT_NE(small_run(AggregationKind::coast_pruned, 4, 1).run.logs,
            small_run(AggregationKind::coast_pruned, 4, 2).run.logs);
}

TEST(RunExperimentTest, PlainFedAvgLearns) {
  ExperimentConfig cfg;
  cfg.aggregation = AggregationKind::plain_fedavg;
  cfg.rounds = 60;
  const auto data = build_client_data(cfg, 1);
  const auto init = init_params(cfg.arch, 1);
  double first = 0.0;
  const auto run = run_experiment(init, data.clients, cfg.rounds, cfg.round_setup(1), [&](const RoundLog& log) {
    if (log.round == 1) first = accuracy(log.global_after, cfg.arch, data.validation);
  });
  EXPECT_GE(accuracy(run.final_params, cfg.arch, data.validation), first + 0.1);
}

TEST(ReplayTest, RoundTripIsIdentical) {
  const auto r = small_run();
  testing::TempDir dir;
  write_logs(dir.path(), r.run.logs, {7, "abc", "clients = 3\n"});
  const auto set = replay(dir.path());
  EXPECT_EQ(set.logs, r.run.logs);
  EXPECT_EQ(set.meta.seed, 7u);
  EXPECT_EQ(set.meta.config_hash, "abc");
  EXPECT_EQ(set.meta.config_text, "clients = 3\n");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / round_file_name(1)));
  EXPECT_EQ(round_file_name(12), "round_0012.bin");
  EXPECT_EQ(assess(set.logs, r.cfg.prune, r.cfg.valuation), assess(r.run.logs, r.cfg.prune, r.cfg.valuation));
}

TEST(ReplayTest, PlainLogsRoundTrip) {
  const auto r = small_run(AggregationKind::plain_fedavg, 2);
  testing::TempDir dir;
  write_logs(dir.path(), r.run.logs, {});
  EXPECT_EQ(replay(dir.path()).logs, r.run.logs);
}

TEST(ReplayTest, DetectsDamage) {
  const auto r = small_run(AggregationKind::coast_pruned, 2);
  testing::TempDir dir;
  write_logs(dir.path(), r.run.logs, {});
  const auto file = dir.path() / round_file_name(2);
  const auto original = read_file_bytes(file);

  auto truncated = original;
  truncated.resize(truncated.size() / 2);
  write_file_bytes(file, truncated);
  EXPECT_THROW(replay(dir.path()), CorruptLogError);

  auto flipped = original;
  flipped[flipped.size() / 2] ^= 0x10;
  write_file_bytes(file, flipped);
  EXPECT_THROW(replay(dir.path()), CorruptLogError);

  // A consistent rewrite with a damaged body still fails the inner checksum.
  EXPECT_THROW(decode_round(flipped), CorruptLogError);

  write_file_bytes(file, original);
  EXPECT_NO_THROW(replay(dir.path()));
  std::filesystem::remove(file);
  EXPECT_THROW(replay(dir.path()), IoError);
}

TEST(ReplayTest, RejectsBadManifest) {
  testing::TempDir dir;
  EXPECT_THROW(replay(dir.path()), IoError);
  write_file_text(dir.path() / "manifest.json", "{not json");
  EXPECT_THROW(replay(dir.path()), CorruptLogError);
  write_file_text(dir.path() / "manifest.json", R"({"format":"coast-roundlog","version":99})");
  EXPECT_THROW(replay(dir.path()), CorruptLogError);
}

}  // namespace
}  // namespace coast
