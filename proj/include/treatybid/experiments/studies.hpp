#pragma once

// Multi-seed studies: learning vs random, the baseline tournament, stress
// regimes, lambda and hyperparameter sweeps, variance diagnostics, the CTDE
// ablation and the post-shock recovery slope.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/experiments/config.hpp"
#include "treatybid/experiments/trainer.hpp"
#include "treatybid/io/outputs.hpp"
#include "treatybid/learn/checkpoint.hpp"
#include "treatybid/risk/metrics.hpp"
#include "treatybid/risk/stats.hpp"

namespace treatybid::experiments {

using io::json;

/// Runs f(0..n-1) on up to `jobs` threads; results keep index order.
template <class F>
auto parallel_map(std::size_t n, std::size_t jobs, F f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<std::unique_ptr<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i] = std::make_unique<R>(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Seed k of a study: consecutive offsets from the configured seed.
inline RunConfig seeded(RunConfig c, std::size_t k) {
  c.seed += k;
  return c;
}

inline RunConfig with_algorithm(RunConfig c, Algorithm a) {
  c.algorithm.algorithm = a;
  return c;
}

/// Returns a copy of `c` running under `regime`; `c` is untouched.
inline RunConfig apply_stress(const RunConfig& c, const market::StressRegime& regime) {
  regime.validate();
  RunConfig out = c;
  out.environment.stress = regime;
  return out;
}

/// Index of the shared final-evaluation stream.
inline constexpr std::uint64_t kFinalEval = 1;

struct TrainedRun {
  std::shared_ptr<Trainer> trainer;
  EvalSummary final_eval;
};

inline TrainedRun train_and_evaluate(const RunConfig& c) {
  TrainedRun r{std::make_shared<Trainer>(c), {}};
  r.trainer->train_to_end();
  r.final_eval = r.trainer->evaluate(c.eval_episodes, kFinalEval);
  return r;
}

inline double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ContractViolation("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline json to_json_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(io::num(x));
  return a;
}

// ---------------------------------------------------------------- learning

struct LearningReport {
  std::vector<double> marl_reward;
  std::vector<double> random_reward;
  risk::StatReport welch;

  json to_json() const {
    return json{{"marl_final_eval_reward", to_json_array(marl_reward)},
                {"random_final_eval_reward", to_json_array(random_reward)},
                {"welch_marl_vs_random", io::to_json(welch)}};
  }
};

/// MAPPO against random bidders on matched evaluation streams.
inline LearningReport compare_learning_to_random(const RunConfig& base, std::size_t jobs = 1) {
  const std::size_t n = base.study.seeds;
  const auto marl = parallel_map(n, jobs, [&](std::size_t k) {
    return train_and_evaluate(with_algorithm(seeded(base, k), Algorithm::mappo)).final_eval.mean_reward;
  });
  const auto rnd = parallel_map(n, jobs, [&](std::size_t k) {
    const Trainer t(with_algorithm(seeded(base, k), Algorithm::random));
    return t.evaluate(base.eval_episodes, kFinalEval).mean_reward;
  });
  return {marl, rnd, risk::welch_t(marl, rnd)};
}

// -------------------------------------------------------------- tournament

enum class Strategy { marl, actuarial, random, q_baseline };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::marl: return "marl";
    case Strategy::actuarial: return "actuarial";
    case Strategy::random: return "random";
    case Strategy::q_baseline: return "q_baseline";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "marl" || s == "mappo") return Strategy::marl;
  if (s == "actuarial") return Strategy::actuarial;
  if (s == "random") return Strategy::random;
  if (s == "q_baseline" || s == "q_learning") return Strategy::q_baseline;
  throw ConfigError("tournament: unknown strategy '" + s + "'");
}

inline Algorithm algorithm_for(Strategy s) {
  switch (s) {
    case Strategy::marl: return Algorithm::mappo;
    case Strategy::actuarial: return Algorithm::actuarial;
    case Strategy::random: return Algorithm::random;
    case Strategy::q_baseline: return Algorithm::q_learning;
  }
  throw ContractViolation("algorithm_for: unknown strategy");
}

/// The six Table 4 columns, in order.
inline const std::vector<std::string>& tournament_columns() {
  static const std::vector<std::string> cols{"profit",          "cvar95",         "sharpe", "loss_ratio",
                                             "diversification", "bid_success_rate"};
  return cols;
}

inline std::vector<double> table4_values(const EvalSummary& s) {
  return {s.mean_profit, s.cvar95, s.sharpe, s.loss_ratio, s.diversification, s.bid_success_rate};
}

struct StrategyResult {
  Strategy strategy = Strategy::random;
  /// per_seed[k][column]
  std::vector<std::vector<double>> per_seed;
  std::vector<double> column_means;

  std::vector<double> column(std::size_t c) const {
    std::vector<double> v;
    for (const auto& row : per_seed) v.push_back(row.at(c));
    return v;
  }
};

struct PairwiseTest {
  Strategy a = Strategy::marl;
  Strategy b = Strategy::random;
  risk::StatReport welch;
  risk::StatReport ks;
};

struct TournamentReport {
  std::vector<StrategyResult> rows;
  std::vector<PairwiseTest> pairs;

  const StrategyResult& row(Strategy s) const {
    for (const auto& r : rows) {
      if (r.strategy == s) return r;
    }
    throw ContractViolation(std::string("tournament: strategy not in roster: ") + to_string(s));
  }

  const PairwiseTest& pair(Strategy a, Strategy b) const {
    for (const auto& p : pairs) {
      if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return p;
    }
    throw ContractViolation("tournament: pair not in report");
  }

  json to_json() const {
    json strategies = json::array();
    const auto& cols = tournament_columns();
    for (const auto& r : rows) {
      json means = json::object();
      json seeds = json::object();
      for (std::size_t c = 0; c < cols.size(); ++c) {
        means[cols[c]] = io::num(r.column_means[c]);
        seeds[cols[c]] = to_json_array(r.column(c));
      }
      strategies.push_back({{"strategy", to_string(r.strategy)}, {"metrics", means}, {"per_seed", seeds}});
    }
    json tests = json::array();
    for (const auto& p : pairs) {
      tests.push_back({{"a", to_string(p.a)},
                       {"b", to_string(p.b)},
                       {"metric", "profit"},
                       {"welch_t", io::to_json(p.welch)},
                       {"ks", io::to_json(p.ks)}});
    }
    return json{{"columns", cols}, {"strategies", strategies}, {"pairwise", tests}};
  }
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t seed) {
  return dir / ("seed_" + std::to_string(seed) + ".ckpt");
}

/// Every strategy is evaluated as a homogeneous population on the same
/// evaluation stream per seed. MARL and Q-learning are trained in-process
/// unless `marl_checkpoints` names a directory of per-seed checkpoints.
inline TournamentReport run_baseline_tournament(const RunConfig& base, const std::vector<Strategy>& roster,
                                                const std::optional<std::filesystem::path>& marl_checkpoints = {},
                                                std::size_t jobs = 1) {
  if (roster.empty()) throw ConfigError("tournament: roster must be non-empty");
  const std::size_t n = base.study.seeds;
  if (marl_checkpoints && std::find(roster.begin(), roster.end(), Strategy::marl) != roster.end()) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto p = checkpoint_path(*marl_checkpoints, base.seed + k);
      if (!std::filesystem::exists(p)) throw ConfigError("tournament: missing checkpoint: " + p.string());
    }
  }
  TournamentReport rep;
  for (Strategy s : roster) {
    StrategyResult r;
    r.strategy = s;
    r.per_seed = parallel_map(n, jobs, [&](std::size_t k) {
      const RunConfig c = with_algorithm(seeded(base, k), algorithm_for(s));
      Trainer t(c);
      if (s == Strategy::marl && marl_checkpoints) {
        t.restore(learn::load_checkpoint(checkpoint_path(*marl_checkpoints, c.seed)));
      } else if (is_learning(c.algorithm.algorithm)) {
        t.train_to_end();
      }
      return table4_values(t.evaluate(c.eval_episodes, kFinalEval));
    });
    for (std::size_t col = 0; col < tournament_columns().size(); ++col) {
      r.column_means.push_back(finite_mean(r.column(col)));
    }
    rep.rows.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rep.rows.size(); ++j) {
      const auto a = rep.rows[i].column(0);
      const auto b = rep.rows[j].column(0);
      rep.pairs.push_back(
          {rep.rows[i].strategy, rep.rows[j].strategy, risk::welch_t(a, b), risk::ks_two_sample(a, b)});
    }
  }
  return rep;
}

// ------------------------------------------------------------------ stress

struct StressMetrics {
  double mean_reward = 0.0;
  double bid_std = 0.0;
  double cvar95 = 0.0;
};

inline StressMetrics stress_metrics(const EvalSummary& s) { return {s.mean_reward, s.bid_std, s.cvar95}; }

struct StressReport {
  market::StressRegime regime;
  std::vector<StressMetrics> baseline;
  std::vector<StressMetrics> stressed;
  /// Paired t on (stressed - baseline) for mean_reward, bid_std, cvar95.
  risk::StatReport reward_test;
  risk::StatReport bid_std_test;
  risk::StatReport cvar_test;
  /// Percentile bootstrap CI for the mean reward difference.
  risk::StatReport reward_bootstrap;

  json to_json() const {
    auto col = [](const std::vector<StressMetrics>& v, double StressMetrics::*f) {
      std::vector<double> out;
      for (const auto& m : v) out.push_back(m.*f);
      return to_json_array(out);
    };
    json arms = {
        {"baseline",
         {{"mean_reward", col(baseline, &StressMetrics::mean_reward)},
          {"bid_std", col(baseline, &StressMetrics::bid_std)},
          {"cvar95", col(baseline, &StressMetrics::cvar95)}}},
        {"stressed",
         {{"mean_reward", col(stressed, &StressMetrics::mean_reward)},
          {"bid_std", col(stressed, &StressMetrics::bid_std)},
          {"cvar95", col(stressed, &StressMetrics::cvar95)}}}};
    return json{{"regime",
                 {{"kind", market::to_string(regime.kind)},
                  {"cat_multiplier", regime.cat_multiplier},
                  {"capacity_factor", regime.capacity_factor},
                  {"start_episode", regime.start_episode},
                  {"end_episode", regime.end_episode}}},
                {"seeds", baseline.size()},
                {"arms", arms},
                {"paired_t",
                 {{"mean_reward", io::to_json(reward_test)},
                  {"bid_std", io::to_json(bid_std_test)},
                  {"cvar95", io::to_json(cvar_test)}}},
                {"bootstrap_mean_reward_difference", io::to_json(reward_bootstrap)}};
  }
};

/// Trains one MAPPO population per seed on the unstressed market, then
/// evaluates it twice on the same evaluation stream: once unstressed and
/// once under `regime`.
inline StressReport run_stress_study(const RunConfig& base, const market::StressRegime& regime, std::size_t jobs = 1) {
  if (regime.kind == market::StressKind::none) throw ConfigError("stress: regime must not be none");
  regime.validate();
  const std::size_t n = base.study.stress_seeds;
  if (n < 2) throw ConfigError("stress: need at least 2 seeds");
  RunConfig train_cfg = base;
  train_cfg.environment.stress = {};
  const auto arms = parallel_map(n, jobs, [&](std::size_t k) {
    const auto run = train_and_evaluate(with_algorithm(seeded(train_cfg, k), Algorithm::mappo));
    const auto stressed = run.trainer->evaluate(base.eval_episodes, kFinalEval, regime);
    return std::pair{stress_metrics(run.final_eval), stress_metrics(stressed)};
  });
  StressReport rep;
  rep.regime = regime;
  std::vector<double> dr, ds, dc, rb, rs;
  for (const auto& [b, s] : arms) {
    rep.baseline.push_back(b);
    rep.stressed.push_back(s);
    dr.push_back(s.mean_reward - b.mean_reward);
    ds.push_back(s.bid_std - b.bid_std);
    dc.push_back(s.cvar95 - b.cvar95);
    rb.push_back(b.mean_reward);
    rs.push_back(s.mean_reward);
  }
  rep.reward_test = risk::paired_t(dr);
  rep.bid_std_test = risk::paired_t(ds);
  rep.cvar_test = risk::paired_t(dc);
  Engine boot = substream(base.seed, "bootstrap");
  rep.reward_bootstrap =
      risk::bootstrap_ci(rs, rb, base.study.bootstrap_resamples, base.study.bootstrap_level, boot);
  return rep;
}

// ------------------------------------------------------------------ lambda

struct LambdaCell {
  double lambda = 0.0;
  std::vector<double> profit;
  std::vector<double> cvar95;
};

struct LambdaReport {
  std::vector<LambdaCell> cells;
  /// Per-lambda mean (profit, cvar95) points on the frontier.
  std::vector<risk::RiskReturnPoint> frontier;
  std::optional<risk::StatReport> profit_welch;
  std::optional<risk::StatReport> cvar_welch;

  json to_json() const {
    json cs = json::array();
    for (const auto& c : cells) {
      cs.push_back({{"lambda", c.lambda},
                    {"mean_profit", io::num(risk::mean(c.profit))},
                    {"median_profit", io::num(median(c.profit))},
                    {"mean_cvar95", io::num(risk::mean(c.cvar95))},
                    {"median_cvar95", io::num(median(c.cvar95))},
                    {"per_seed_profit", to_json_array(c.profit)},
                    {"per_seed_cvar95", to_json_array(c.cvar95)}});
    }
    json f = json::array();
    for (const auto& p : frontier) {
      json point{{"profit", p.profit}, {"cvar95", p.cvar}};
      for (const auto& c : cells) {
        if (risk::mean(c.profit) == p.profit && risk::mean(c.cvar95) == p.cvar) point["lambda"] = c.lambda;
      }
      f.push_back(point);
    }
    json j{{"cells", cs}, {"frontier", f}};
    if (profit_welch) {
      j["welch_extremes"] = {{"groups", {cells.front().lambda, cells.back().lambda}},
                             {"profit", io::to_json(*profit_welch)},
                             {"cvar95", io::to_json(*cvar_welch)}};
    }
    return j;
  }
};

/// Trains MAPPO per (lambda, seed); cells are sorted by lambda.
inline LambdaReport sweep_lambda(const RunConfig& base, std::vector<double> lambdas, std::size_t jobs = 1) {
  if (lambdas.empty()) throw ConfigError("sweep-lambda: need at least one lambda");
  std::sort(lambdas.begin(), lambdas.end());
  const std::size_t seeds = base.study.lambda_seeds;
  const auto results = parallel_map(lambdas.size() * seeds, jobs, [&](std::size_t idx) {
    RunConfig c = with_algorithm(seeded(base, idx % seeds), Algorithm::mappo);
    c.environment.reward.lambda_cvar = lambdas[idx / seeds];
    const auto e = train_and_evaluate(c).final_eval;
    return std::pair{e.mean_profit, e.cvar95};
  });
  LambdaReport rep;
  std::vector<risk::RiskReturnPoint> points;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    LambdaCell cell;
    cell.lambda = lambdas[l];
    for (std::size_t k = 0; k < seeds; ++k) {
      cell.profit.push_back(results[l * seeds + k].first);
      cell.cvar95.push_back(results[l * seeds + k].second);
    }
    points.push_back({risk::mean(cell.profit), risk::mean(cell.cvar95)});
    rep.cells.push_back(std::move(cell));
  }
  rep.frontier = risk::pareto_frontier(points);
  if (rep.cells.size() >= 2 && seeds >= 2) {
    rep.profit_welch = risk::welch_t(rep.cells.front().profit, rep.cells.back().profit);
    rep.cvar_welch = risk::welch_t(rep.cells.front().cvar95, rep.cells.back().cvar95);
  }
  return rep;
}

// ----------------------------------------------------------------- hparams

struct HparamCell {
  double actor_lr = 0.0;
  std::size_t minibatch = 0;
  std::vector<double> final_reward;
};

struct HparamReport {
  std::vector<HparamCell> cells;
  risk::StatReport anova;

  json to_json() const {
    json cs = json::array();
    for (const auto& c : cells) {
      cs.push_back({{"actor_lr", c.actor_lr},
                    {"minibatch", c.minibatch},
                    {"mean", io::num(risk::mean(c.final_reward))},
                    {"std", io::num(c.final_reward.size() >= 2 ? std::sqrt(risk::sample_variance(c.final_reward))
                                                               : std::numeric_limits<double>::quiet_NaN())},
                    {"per_seed", to_json_array(c.final_reward)}});
    }
    return json{{"cells", cs}, {"anova", io::to_json(anova)}};
  }
};

/// Cartesian grid of actor learning rate x minibatch size.
inline HparamReport sweep_hyperparams(const RunConfig& base, const std::vector<double>& actor_lrs,
                                      const std::vector<std::size_t>& minibatches, std::size_t jobs = 1) {
  if (actor_lrs.empty() || minibatches.empty()) throw ConfigError("sweep-hparams: grid must be non-empty");
  const std::size_t seeds = base.study.hparam_seeds;
  if (seeds < 3) throw ConfigError("sweep-hparams: need at least 3 seeds per cell");
  std::vector<HparamCell> cells;
  for (double lr : actor_lrs) {
    for (std::size_t mb : minibatches) cells.push_back({lr, mb, {}});
  }
  const auto results = parallel_map(cells.size() * seeds, jobs, [&](std::size_t idx) {
    RunConfig c = with_algorithm(seeded(base, idx % seeds), Algorithm::mappo);
    c.algorithm.actor_lr = cells[idx / seeds].actor_lr;
    c.algorithm.ppo.minibatch = cells[idx / seeds].minibatch;
    c.validate();
    return train_and_evaluate(c).final_eval.mean_reward;
  });
  std::vector<std::vector<double>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t k = 0; k < seeds; ++k) cells[i].final_reward.push_back(results[i * seeds + k]);
    groups.push_back(cells[i].final_reward);
  }
  return {cells, risk::one_way_anova(groups)};
}

// --------------------------------------------------------------- variance

/// Mean reward across agents for each episode, in episode order.
inline std::vector<double> episode_mean_rewards(const std::vector<EpisodeMetrics>& rows) {
  std::vector<double> out;
  std::int64_t current = std::numeric_limits<std::int64_t>::min();
  double sum = 0.0;
  int count = 0;
  for (const auto& m : rows) {
    if (m.episode != current) {
      if (count) out.push_back(sum / count);
      current = m.episode;
      sum = 0.0;
      count = 0;
    }
    sum += m.reward;
    ++count;
  }
  if (count) out.push_back(sum / count);
  return out;
}

struct VarianceDiagnostics {
  std::size_t window = 0;
  /// Reward std over consecutive non-overlapping windows.
  std::vector<double> window_std;
  double initial_std = 0.0;
  double final_std = 0.0;
  risk::StatReport trend;
  bool converged = false;

  std::string trend_label() const {
    if (trend.degenerate || !(trend.p_value < 0.05)) return "Flat";
    return trend.mean_difference < 0.0 ? "Decreasing" : "Increasing";
  }

  json to_json() const {
    return json{{"window", window},
                {"window_std", to_json_array(window_std)},
                {"initial_std", io::num(initial_std)},
                {"final_std", io::num(final_std)},
                {"trend", io::to_json(trend)},
                {"trend_label", trend_label()},
                {"converged", converged}};
  }
};

inline VarianceDiagnostics variance_diagnostics(std::span<const double> series, std::size_t window,
                                                double std_threshold) {
  if (window < 2) throw ConfigError("variance: window must be >= 2");
  if (series.size() < window) {
    throw ConfigError("variance: stream of " + std::to_string(series.size()) + " episodes is shorter than window " +
                      std::to_string(window));
  }
  VarianceDiagnostics d;
  d.window = window;
  for (std::size_t s = 0; s + window <= series.size(); s += window) {
    d.window_std.push_back(risk::population_std(series.subspan(s, window)));
  }
  d.initial_std = d.window_std.front();
  d.final_std = d.window_std.back();
  const bool all_zero = std::all_of(d.window_std.begin(), d.window_std.end(), [](double x) { return x == 0.0; });
  if (d.window_std.size() >= 3) {
    d.trend = risk::ols_trend(d.window_std);
  } else {
    d.trend.method = risk::TestMethod::ols_trend;
    d.trend.degenerate = true;
  }
  const bool decreasing = !d.trend.degenerate && d.trend.mean_difference < 0.0 && d.trend.p_value < 0.05;
  d.converged = all_zero || (d.final_std < std_threshold && decreasing);
  return d;
}

// ---------------------------------------------------------------- ablation

struct AblationRow {
  std::string label;
  Algorithm algorithm = Algorithm::mappo;
  std::vector<VarianceDiagnostics> seeds;
  double median_final_std = 0.0;
  double median_initial_std = 0.0;
  bool applicable = true;
  std::size_t converged_seeds = 0;

  std::string verdict() const {
    if (!applicable) return "N/A";
    return 2 * converged_seeds > seeds.size() ? "Converged" : "Not converged";
  }

  std::string trend() const {
    std::size_t dec = 0;
    std::size_t inc = 0;
    for (const auto& s : seeds) {
      const auto l = s.trend_label();
      dec += l == "Decreasing";
      inc += l == "Increasing";
    }
    if (2 * dec > seeds.size()) return "Decreasing";
    if (2 * inc > seeds.size()) return "Increasing";
    return "Flat";
  }
};

struct AblationReport {
  std::vector<AblationRow> rows;

  json to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
      std::vector<double> finals;
      for (const auto& s : r.seeds) finals.push_back(s.final_std);
      rs.push_back({{"model", r.label},
                    {"initial_std_median", io::num(r.median_initial_std)},
                    {"final_std_median", io::num(r.median_final_std)},
                    {"variance_trend", r.trend()},
                    {"convergence", r.verdict()},
                    {"per_seed_final_std", to_json_array(finals)}});
    }
    return json{{"rows", rs}};
  }
};

inline AblationReport ablation_ctde(const RunConfig& base, std::size_t jobs = 1) {
  struct Spec {
    const char* label;
    Algorithm alg;
    bool applicable;
  };
  const Spec specs[] = {{"MARL Agents (CTDE)", Algorithm::mappo, true},
                        {"Decentralized MARL (No Central Critic)", Algorithm::mappo_local, true},
                        {"Random Bidding Agents", Algorithm::random, false}};
  AblationReport rep;
  const std::size_t seeds = base.study.seeds;
  for (const auto& sp : specs) {
    AblationRow row;
    row.label = sp.label;
    row.algorithm = sp.alg;
    row.applicable = sp.applicable;
    row.seeds = parallel_map(seeds, jobs, [&](std::size_t k) {
      Trainer t(with_algorithm(seeded(base, k), sp.alg));
      t.train_to_end();
      const auto series = episode_mean_rewards(t.metrics());
      return variance_diagnostics(series, base.study.variance_window, base.study.convergence_std_threshold);
    });
    std::vector<double> finals;
    std::vector<double> initials;
    for (const auto& s : row.seeds) {
      finals.push_back(s.final_std);
      initials.push_back(s.initial_std);
      row.converged_seeds += s.converged;
    }
    row.median_final_std = median(finals);
    row.median_initial_std = median(initials);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// ---------------------------------------------------------------- recovery

/// OLS slope of `series` over [shock_end + 1, shock_end + span]. The slope
/// is reported in mean_difference.
inline risk::StatReport recovery_slope(std::span<const double> series, std::int64_t shock_end, std::size_t span) {
  if (shock_end < 0 || static_cast<std::size_t>(shock_end) + 1 >= series.size()) {
    throw ConfigError("recovery: shock window ends after the series");
  }
  const auto first = static_cast<std::size_t>(shock_end) + 1;
  const std::size_t len = std::min(span, series.size() - first);
  if (len < 3) throw ConfigError("recovery: need at least 3 post-shock episodes");
  return risk::ols_trend(series.subspan(first, len));
}

/// Windowed shock [600, 700] of a 1,500-episode run, scaled to the configured
/// episode count.
inline market::StressRegime windowed_shock(const RunConfig& c, market::StressKind kind) {
  market::StressRegime r;
  r.kind = kind;
  r.start_episode = c.episodes * 600 / 1500;
  r.end_episode = c.episodes * 700 / 1500;
  return r;
}

struct RecoveryReport {
  market::StressRegime regime;
  risk::StatReport slope;
  double pre_shock_mean = 0.0;
  double shock_mean = 0.0;

  json to_json() const {
    return json{{"shock_start", regime.start_episode},
                {"shock_end", regime.end_episode},
                {"pre_shock_mean_reward", io::num(pre_shock_mean)},
                {"shock_mean_reward", io::num(shock_mean)},
                {"recovery_slope", io::num(slope.mean_difference)},
                {"trend", io::to_json(slope)}};
  }
};

/// Trains one MAPPO population through a windowed shock and fits the
/// post-shock reward trend.
inline RecoveryReport shock_recovery(const RunConfig& base, market::StressKind kind) {
  RunConfig c = with_algorithm(base, Algorithm::mappo);
  RecoveryReport rep;
  rep.regime = windowed_shock(c, kind);
  c.environment.stress = rep.regime;
  c.validate();
  Trainer t(c);
  t.train_to_end();
  const auto series = episode_mean_rewards(t.metrics());
  const auto s = static_cast<std::size_t>(rep.regime.start_episode);
  const auto e = static_cast<std::size_t>(rep.regime.end_episode);
  rep.pre_shock_mean = risk::mean(std::span<const double>(series).subspan(s - std::min<std::size_t>(s, 100), std::min<std::size_t>(s, 100)));
  rep.shock_mean = risk::mean(std::span<const double>(series).subspan(s, e - s + 1));
  rep.slope = recovery_slope(series, rep.regime.end_episode, 200);
  return rep;
}

}  // namespace treatybid::experiments
