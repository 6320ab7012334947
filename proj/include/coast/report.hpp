#pragma once

// Report files.
//
// report.json        format/version, setting, seed, config echo (key order
//                    fixed), ground-truth ranking, then per method: rho,
//                    totals, ranking, scored rounds, score table file name
// scores_<m>.csv     header "method,client,round,score"; clients 1-based,
//                    rows ordered by client then round
//
// Doubles are written in shortest round-trip form, so emit -> parse returns
// the identical in-memory report and equal inputs give byte-equal files.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coast/error.hpp"
#include "coast/io.hpp"
#include "coast/ranking.hpp"
#include "coast/scoreboard.hpp"

namespace coast {

inline constexpr std::string_view kReportFormat = "coast-report";
inline constexpr int kReportVersion = 1;

struct MethodResult {
  ScoreBoard board;
  double rho = 0.0;

  friend bool operator==(const MethodResult&, const MethodResult&) = default;
};

struct Report {
  std::string setting;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> config;  // echo, in key order
  std::vector<int> ground_truth;
  std::vector<MethodResult> methods;

  const MethodResult* find(std::string_view method) const {
    for (const auto& m : methods)
      if (m.board.method == method) return &m;
    return nullptr;
  }

  friend bool operator==(const Report&, const Report&) = default;
};

inline MethodResult evaluate(ScoreBoard board, std::span<const int> ground_truth) {
  MethodResult r;
  r.rho = spearman(ground_truth, board.ranking);
  r.board = std::move(board);
  return r;
}

inline std::string format_score(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string scores_csv(const ScoreBoard& board) {
  std::string out = "method,client,round,score\n";
  for (std::size_t i = 0; i < board.num_clients(); ++i)
    for (std::size_t k = 0; k < board.rounds.size(); ++k)
      out += board.method + "," + std::to_string(i + 1) + "," + std::to_string(board.rounds[k]) + "," +
             format_score(board.scores[i][k]) + "\n";
  return out;
}

inline std::string scores_file_name(const std::string& method) { return "scores_" + method + ".csv"; }

inline nlohmann::ordered_json report_json(const Report& report) {
  nlohmann::ordered_json j;
  j["format"] = kReportFormat;
  j["version"] = kReportVersion;
  j["setting"] = report.setting;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  j["config"] = cfg;
  j["ground_truth"] = report.ground_truth;
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& m : report.methods) {
    nlohmann::ordered_json e;
    e["method"] = m.board.method;
    e["rho"] = m.rho;
    e["totals"] = m.board.totals;
    e["ranking"] = m.board.ranking;
    e["rounds"] = m.board.rounds;
    e["scores_file"] = scores_file_name(m.board.method);
    methods.push_back(std::move(e));
  }
  j["methods"] = methods;
  return j;
}

inline void emit_report(const Report& report, const std::filesystem::path& dir) {
  ensure_directory(dir);
  write_file_text(dir / "report.json", report_json(report).dump(2) + "\n");
  for (const auto& m : report.methods) write_file_text(dir / scores_file_name(m.board.method), scores_csv(m.board));
}

namespace report_detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

template <typename T>
T number(const std::string& s, const std::filesystem::path& path) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw CorruptLogError(path.string() + ": bad number '" + s + "'");
  return v;
}

// Fills board.scores from a CSV table; the board's rounds must already be set.
inline void read_scores(const std::filesystem::path& path, ScoreBoard& board, std::size_t clients) {
  std::istringstream in(read_file_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "method,client,round,score")
    throw CorruptLogError(path.string() + ": missing header");
  board.scores.assign(clients, std::vector<double>(board.rounds.size(), 0.0));
  std::map<int, std::size_t> round_pos;
  for (std::size_t k = 0; k < board.rounds.size(); ++k) round_pos[board.rounds[k]] = k;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 4 || cells[0] != board.method) throw CorruptLogError(path.string() + ": bad row '" + line + "'");
    const auto client = number<std::size_t>(cells[1], path);
    const auto round = number<int>(cells[2], path);
    if (client < 1 || client > clients || !round_pos.contains(round))
      throw CorruptLogError(path.string() + ": row out of range '" + line + "'");
    board.scores[client - 1][round_pos[round]] = number<double>(cells[3], path);
    ++rows;
  }
  if (rows != clients * board.rounds.size()) throw CorruptLogError(path.string() + ": incomplete score table");
}

}  // namespace report_detail

inline Report parse_report(const std::filesystem::path& dir) {
  const auto path = dir / "report.json";
  if (!std::filesystem::exists(path)) throw IoError("no report.json in " + dir.string());
  Report report;
  try {
    const auto j = nlohmann::ordered_json::parse(read_file_text(path));
    if (j.at("format").get<std::string>() != kReportFormat || j.at("version").get<int>() != kReportVersion)
      throw CorruptLogError(path.string() + ": unsupported report format");
    report.setting = j.at("setting").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) report.config.emplace_back(k, v.get<std::string>());
    report.ground_truth = j.at("ground_truth").get<std::vector<int>>();
    for (const auto& e : j.at("methods")) {
      MethodResult m;
      m.board.method = e.at("method").get<std::string>();
      m.rho = e.at("rho").get<double>();
      m.board.totals = e.at("totals").get<std::vector<double>>();
      m.board.ranking = e.at("ranking").get<std::vector<int>>();
      m.board.rounds = e.at("rounds").get<std::vector<int>>();
      report_detail::read_scores(dir / e.at("scores_file").get<std::string>(), m.board, m.board.totals.size());
      report.methods.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptLogError(path.string() + ": " + e.what());
  }
  return report;
}

// Mean rho per method over a set of reports (e.g. one per seed).
inline std::vector<std::pair<std::string, double>> mean_rho(std::span<const Report> reports) {
  std::vector<std::pair<std::string, double>> out;
  if (reports.empty()) return out;
  for (const auto& m : reports.front().methods) {
    double sum = 0.0;
    for (const auto& r : reports) {
      const auto* found = r.find(m.board.method);
      if (found == nullptr) throw StructuralError("reports disagree on methods");
      sum += found->rho;
    }
    out.emplace_back(m.board.method, sum / static_cast<double>(reports.size()));
  }
  return out;
}

inline nlohmann::ordered_json summary_json(std::span<const Report> reports) {
  nlohmann::ordered_json j;
  j["format"] = "coast-summary";
  j["version"] = kReportVersion;
  j["setting"] = reports.empty() ? "" : reports.front().setting;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.push_back(r.seed);
  j["seeds"] = seeds;
  nlohmann::ordered_json methods = nlohmann::ordered_json::object();
  for (const auto& [name, mean] : mean_rho(reports)) {
    std::vector<double> rhos;
    for (const auto& r : reports) rhos.push_back(r.find(name)->rho);
    methods[name] = {{"rho", rhos}, {"mean_rho", mean}};
  }
  j["methods"] = methods;
  return j;
}

}  // namespace coast
