#pragma once

// Run artifacts: metrics CSV, JSONL episode log, manifest, JSON reports.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treatybid/error.hpp"
#include "treatybid/experiments/trainer.hpp"
#include "treatybid/market/environment.hpp"
#include "treatybid/risk/stats.hpp"

namespace treatybid::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "treatybid 1.0.0";

inline constexpr const char* kMetricsHeader =
    "episode,agent_id,reward,profit,cvar95,efficiency,win,premium_rate,loss_total,loss_ratio,capital";

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<experiments::EpisodeMetrics>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& m : rows) {
    out << m.episode << ',' << m.agent_id << ',' << fmt17(m.reward) << ',' << fmt17(m.profit) << ','
        << fmt17(m.cvar95) << ',' << fmt17(m.efficiency) << ',' << m.win << ',' << fmt17(m.premium_rate) << ','
        << fmt17(m.loss_total) << ',' << fmt17(m.loss_ratio) << ',' << fmt17(m.capital) << '\n';
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("io: cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("io: cannot open " + path.string() + " for writing");
  return out;
}

inline void close_checked(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("io: write failed for " + path.string());
}

inline void emit_metrics(const std::vector<experiments::EpisodeMetrics>& rows, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_metrics_csv(out, rows);
  close_checked(out, path);
}

inline double parse_double(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("metrics: bad number '" + s + "' in " + what);
  return v;
}

inline std::vector<experiments::EpisodeMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics: missing or unexpected header");
  std::vector<experiments::EpisodeMetrics> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw FormatError("metrics: line " + std::to_string(lineno) + " has " +
                                          std::to_string(f.size()) + " columns, expected 11");
    const std::string where = "line " + std::to_string(lineno);
    experiments::EpisodeMetrics m;
    m.episode = static_cast<std::int64_t>(parse_double(f[0], where));
    m.agent_id = static_cast<int>(parse_double(f[1], where));
    m.reward = parse_double(f[2], where);
    m.profit = parse_double(f[3], where);
    m.cvar95 = parse_double(f[4], where);
    m.efficiency = parse_double(f[5], where);
    m.win = static_cast<int>(parse_double(f[6], where));
    m.premium_rate = parse_double(f[7], where);
    m.loss_total = parse_double(f[8], where);
    m.loss_ratio = parse_double(f[9], where);
    m.capital = parse_double(f[10], where);
    rows.push_back(m);
  }
  return rows;
}

inline std::vector<experiments::EpisodeMetrics> load_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("metrics: file not found: " + path.string());
  return read_metrics_csv(in);
}

/// JSON has no NaN or infinity; those become null.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const risk::StatReport& r) {
  return json{{"method", risk::to_string(r.method)},
              {"statistic", num(r.statistic)},
              {"p_value", num(r.p_value)},
              {"mean_difference", num(r.mean_difference)},
              {"ci_low", num(r.ci_low)},
              {"ci_high", num(r.ci_high)},
              {"dof", num(r.dof)},
              {"dof2", num(r.dof2)},
              {"degenerate", r.degenerate}};
}

inline json to_json(const market::TreatySpec& t) {
  return json{{"id", t.id},
              {"kind", market::to_string(t.treaty_kind)},
              {"line", t.line},
              {"exposure", t.exposure},
              {"attachment", t.attachment},
              {"limit", t.limit},
              {"retention", t.retention},
              {"cat_prob", t.cat_prob},
              {"cat_scale", t.cat_scale}};
}

inline json to_json(const market::EpisodeRecord& rec) {
  json agents = json::array();
  for (const auto& s : rec.agents) {
    const auto& u = rec.outcome.utilities.at(static_cast<std::size_t>(s.agent));
    agents.push_back({{"agent", s.agent},
                      {"premium_rate", s.bid.premium_rate},
                      {"quota", s.bid.quota},
                      {"ceding_commission", s.bid.ceding_commission},
                      {"attachment_offset", s.bid.attachment_offset},
                      {"limit_factor", s.bid.limit_factor},
                      {"submitted_at_ms", s.bid.submitted_at},
                      {"participated", s.participated},
                      {"declined", s.declined},
                      {"utility", u ? num(*u) : json(nullptr)},
                      {"won", s.won},
                      {"profit", num(s.profit)},
                      {"reward", num(s.reward)},
                      {"capital", num(s.capital)}});
  }
  const auto& o = rec.outcome;
  return json{{"episode", rec.episode},
              {"stressed", rec.stressed},
              {"treaty", to_json(rec.treaty)},
              {"winner", o.winner ? json(*o.winner) : json(nullptr)},
              {"incumbent", o.incumbent ? json(*o.incumbent) : json(nullptr)},
              {"incumbent_rule_used", o.incumbent_rule_used},
              {"last_look_used", o.last_look_used},
              {"premium_paid", num(o.premium_paid)},
              {"loss", {{"attritional", rec.loss.attritional_total}, {"catastrophe", rec.loss.cat_total}}},
              {"agents", agents}};
}

/// Streams one JSON object per episode.
class EpisodeLog {
 public:
  explicit EpisodeLog(const std::filesystem::path& path) : path_(path), out_(open_output(path)) {}
  void write(const market::EpisodeRecord& rec) {
    out_ << to_json(rec).dump() << '\n';
    if (!out_) throw std::runtime_error("io: write failed for " + path_.string());
  }
  void close() { close_checked(out_, path_); }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_json(const json& j, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  close_checked(out, path);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::string started_at;
  std::string finished_at;
  /// Per-seed (or per-run) output files, keyed by label.
  std::vector<std::pair<std::string, std::filesystem::path>> outputs;
  json summary = json::object();

  json to_json() const {
    json files = json::object();
    for (const auto& [k, p] : outputs) files[k] = p.string();
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    return json{{"version", kVersion}, {"command", command},         {"started_at", started_at},
                {"finished_at", finished_at}, {"config", cfg},       {"outputs", files},
                {"summary", summary}};
  }
};

/// Writes the manifest after checking every referenced output exists and
/// is non-empty.
inline void write_manifest(RunManifest m, const std::filesystem::path& path) {
  for (const auto& [k, p] : m.outputs) {
    std::error_code ec;
    if (!std::filesystem::exists(p, ec) || std::filesystem::file_size(p, ec) == 0) {
      throw std::runtime_error("manifest: output '" + k + "' missing or empty: " + p.string());
    }
  }
  if (m.finished_at.empty()) m.finished_at = utc_timestamp();
  write_json(m.to_json(), path);
}

}  // namespace treatybid::io
