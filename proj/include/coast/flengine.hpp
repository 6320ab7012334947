#pragma once

// Round-based federated training: every client trains locally from the
// current global model, the server aggregates either by plain FedAvg or by
// averaging pruned (ternary) updates, and each round is recorded in a
// RoundLog that can be persisted and replayed bit-identically.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "coast/error.hpp"
#include "coast/io.hpp"
#include "coast/model.hpp"
#include "coast/params.hpp"
#include "coast/prune.hpp"
#include "coast/snapshot.hpp"
#include "coast/synthdata.hpp"

namespace coast {

enum class AggregationKind { plain_fedavg, coast_pruned };

inline std::string_view to_string(AggregationKind k) {
  return k == AggregationKind::plain_fedavg ? "plain" : "coast";
}

inline std::optional<AggregationKind> parse_aggregation(std::string_view s) {
  if (s == "plain" || s == "plain_fedavg" || s == "fedavg") return AggregationKind::plain_fedavg;
  if (s == "coast" || s == "coast_pruned" || s == "pruned") return AggregationKind::coast_pruned;
  return std::nullopt;
}

struct AggregationMode {
  AggregationKind kind = AggregationKind::coast_pruned;
  PruneConfig prune;
};

struct RoundLog {
  int round = 0;
  LayeredParams global_before;                // Theta^{t-1}
  std::vector<LayeredParams> raw_updates;     // Delta_i = theta_i - Theta^{t-1}
  std::vector<LayeredParams> pruned_updates;  // empty under plain FedAvg
  LayeredParams global_after;                 // Theta^t

  std::size_t num_clients() const { return raw_updates.size(); }
  bool has_pruned() const { return !pruned_updates.empty(); }

  // Local model of client i (0-based) reconstructed from the log.
  LayeredParams local_params(std::size_t i) const { return add(global_before, raw_updates.at(i)); }

  friend bool operator==(const RoundLog&, const RoundLog&) = default;
};

// Theta^{t-1} + step/N * sum of the pruned updates, or the plain mean of
// the local models expressed through the raw updates.
inline LayeredParams aggregate(const LayeredParams& global_before, std::span<const LayeredParams> updates,
                               double step) {
  if (updates.empty()) throw ConfigError("aggregate: no client updates");
  LayeredParams sum = LayeredParams::zeros(global_before.arch());
  for (const auto& u : updates) add_scaled(sum, u, 1.0);
  LayeredParams out = global_before;
  add_scaled(out, sum, step / static_cast<double>(updates.size()));
  return out;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(jobs));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RoundSetup {
  ModelArch arch;
  TrainConfig train;
  AggregationMode mode;
  std::uint64_t seed = 0;
  int jobs = 1;
};

inline RoundLog run_round(int t, const LayeredParams& global_before, std::span<const Dataset> clients,
                          const RoundSetup& setup) {
  if (t < 1) throw ConfigError("round index must be >= 1");
  if (clients.empty()) throw ConfigError("run_round: no clients");
  if (setup.mode.kind == AggregationKind::coast_pruned) setup.mode.prune.validate();
  const std::size_t n = clients.size();
  RoundLog log;
  log.round = t;
  log.global_before = global_before;
  log.raw_updates.resize(n);
  parallel_for(n, setup.jobs, [&](std::size_t i) {
    const TrainContext ctx{t, static_cast<int>(i + 1), setup.seed};
    const auto local = local_train(global_before, setup.arch, clients[i], setup.train, ctx);
    log.raw_updates[i] = sub(local, global_before);
  });
  if (setup.mode.kind == AggregationKind::coast_pruned) {
    log.pruned_updates.resize(n);
    for (std::size_t i = 0; i < n; ++i) log.pruned_updates[i] = prune(log.raw_updates[i], setup.mode.prune);
    log.global_after = aggregate(global_before, log.pruned_updates, setup.mode.prune.step());
  } else {
    log.global_after = aggregate(global_before, log.raw_updates, 1.0);
  }
  return log;
}

struct ExperimentRun {
  std::vector<RoundLog> logs;
  LayeredParams final_params;
};

// Rounds 1..rounds, each starting from the previous global model.
inline ExperimentRun run_experiment(const LayeredParams& initial, std::span<const Dataset> clients, int rounds,
                                    const RoundSetup& setup,
                                    const std::function<void(const RoundLog&)>& on_round = {}) {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  ExperimentRun run;
  run.logs.reserve(static_cast<std::size_t>(rounds));
  LayeredParams global = initial;
  for (int t = 1; t <= rounds; ++t) {
    run.logs.push_back(run_round(t, global, clients, setup));
    global = run.logs.back().global_after;
    if (on_round) on_round(run.logs.back());
  }
  run.final_params = std::move(global);
  return run;
}

// ---------------------------------------------------------------------------
// Persistence
//
// <dir>/manifest.json      format, version, seed, config hash, architecture,
//                          round count, per-round file name and checksum
// <dir>/round_NNNN.bin     "CRLG", u32 version, u32 round, u32 clients,
//                          u8 has_pruned, snapshot(global_before),
//                          clients x snapshot(raw), [clients x snapshot(pruned)],
//                          snapshot(global_after), u64 FNV-1a of all prior bytes

inline constexpr std::uint32_t kRoundLogVersion = 1;
inline constexpr std::string_view kLogFormat = "coast-roundlog";

struct LogMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_text;  // serialized experiment configuration
};

struct LogSet {
  LogMeta meta;
  std::vector<RoundLog> logs;
};

inline std::vector<std::uint8_t> encode_round(const RoundLog& log) {
  ByteWriter w;
  w.bytes("CRLG");
  w.u32(kRoundLogVersion);
  w.u32(static_cast<std::uint32_t>(log.round));
  w.u32(static_cast<std::uint32_t>(log.num_clients()));
  w.u8(log.has_pruned() ? 1 : 0);
  write_snapshot(w, log.global_before);
  for (const auto& u : log.raw_updates) write_snapshot(w, u);
  for (const auto& u : log.pruned_updates) write_snapshot(w, u);
  write_snapshot(w, log.global_after);
  w.checksum_from(0);
  return w.take();
}

inline RoundLog decode_round(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != "CRLG") throw CorruptLogError("round log: bad magic");
  if (const auto v = r.u32(); v != kRoundLogVersion)
    throw CorruptLogError("round log: unsupported version " + std::to_string(v));
  RoundLog log;
  log.round = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();
  const bool has_pruned = r.u8() != 0;
  log.global_before = read_snapshot(r);
  for (std::uint32_t i = 0; i < n; ++i) log.raw_updates.push_back(read_snapshot(r));
  if (has_pruned)
    for (std::uint32_t i = 0; i < n; ++i) log.pruned_updates.push_back(read_snapshot(r));
  log.global_after = read_snapshot(r);
  r.verify_checksum_from(0, "round log");
  if (r.remaining() != 0) throw CorruptLogError("round log: trailing bytes");
  return log;
}

inline std::string round_file_name(int round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%04d.bin", round);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_logs(const std::filesystem::path& dir, std::span<const RoundLog> logs, const LogMeta& meta) {
  if (logs.empty()) throw ConfigError("write_logs: nothing to write");
  ensure_directory(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = kLogFormat;
  manifest["version"] = kRoundLogVersion;
  manifest["seed"] = meta.seed;
  manifest["config_hash"] = meta.config_hash;
  manifest["rounds"] = logs.size();
  manifest["clients"] = logs.front().num_clients();
  manifest["has_pruned"] = logs.front().has_pruned();
  nlohmann::ordered_json arch = nlohmann::ordered_json::array();
  for (const auto& s : logs.front().global_before.arch()) arch.push_back({{"name", s.name}, {"size", s.size}});
  manifest["architecture"] = arch;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& log : logs) {
    const auto bytes = encode_round(log);
    const auto name = round_file_name(log.round);
    write_file_bytes(dir / name, bytes);
    files.push_back({{"round", log.round}, {"file", name}, {"fnv1a64", hex64(fnv1a64(bytes))}});
  }
  manifest["round_files"] = files;
  manifest["config"] = meta.config_text;
  write_file_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline LogSet replay(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw IoError("no round log manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptLogError(manifest_path.string() + ": " + e.what());
  }
  LogSet set;
  try {
    if (manifest.at("format").get<std::string>() != kLogFormat)
      throw CorruptLogError(manifest_path.string() + ": not a round log manifest");
    if (manifest.at("version").get<std::uint32_t>() != kRoundLogVersion)
      throw CorruptLogError(manifest_path.string() + ": version mismatch");
    set.meta.seed = manifest.at("seed").get<std::uint64_t>();
    set.meta.config_hash = manifest.at("config_hash").get<std::string>();
    set.meta.config_text = manifest.value("config", std::string{});
    Architecture arch;
    for (const auto& l : manifest.at("architecture"))
      arch.push_back({l.at("name").get<std::string>(), l.at("size").get<std::size_t>()});
    const auto clients = manifest.at("clients").get<std::size_t>();
    const auto& files = manifest.at("round_files");
    if (files.size() != manifest.at("rounds").get<std::size_t>())
      throw CorruptLogError(manifest_path.string() + ": round count mismatch");
    int expected_round = 1;
    for (const auto& f : files) {
      const auto path = dir / f.at("file").get<std::string>();
      const auto bytes = read_file_bytes(path);
      if (hex64(fnv1a64(bytes)) != f.at("fnv1a64").get<std::string>())
        throw CorruptLogError(path.string() + ": checksum does not match manifest");
      RoundLog log;
      try {
        log = decode_round(bytes);
      } catch (const CorruptLogError& e) {
        throw CorruptLogError(path.string() + ": " + e.what());
      }
      if (log.round != expected_round++ || log.num_clients() != clients || log.global_before.arch() != arch)
        throw CorruptLogError(path.string() + ": inconsistent with manifest");
      set.logs.push_back(std::move(log));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptLogError(manifest_path.string() + ": " + e.what());
  }
  if (set.logs.empty()) throw CorruptLogError(dir.string() + ": log contains no rounds");
  return set;
}

}  // namespace coast
