#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../common/checks.hpp"
#include "gen.hpp"
#include "treatybid/error.hpp"
#include "treatybid/experiments/config.hpp"
#include "treatybid/experiments/studies.hpp"
#include "treatybid/experiments/trainer.hpp"
#include "treatybid/io/outputs.hpp"

using namespace treatybid;
using namespace treatybid::experiments;
using treatybid::testing::Gen;

namespace {
RunConfig parse_ini(const std::string& ini) {
  std::istringstream in(ini);
  return parse_config_stream(in);
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("treatybid_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace

TEST(Config, UnknownKeyAndSectionRejected) {
  EXPECT_THROW(parse_ini("[run]\nepisodez = 3\n"), ConfigError);
  EXPECT_THROW(parse_ini("[bogus]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_ini("[run]\nepisodes = many\n"), ConfigError);
  EXPECT_THROW(parse_ini("[run]\nepisodes = -1\n"), ConfigError);
  EXPECT_THROW(parse_ini("[run]\npreset = huge\n"), ConfigError);
  try {
    parse_ini("[algorithm]\nactor_lrr = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("algorithm.actor_lrr"), std::string::npos);
  }
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/treatybid.ini"), ConfigError);
}

TEST(Config, OverridesApplyOnTopOfPreset) {
  const auto c = parse_ini("[run]\npreset = paper\nseed = 17\nepisodes = 20\n[environment]\ndelta_incumbent = 0.5\n");
  EXPECT_EQ(c.preset, "paper");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.episodes, 20);
  EXPECT_EQ(c.environment.horizon, 20);
  EXPECT_EQ(c.environment.insurer.delta_incumbent, 0.5);
  EXPECT_EQ(c.environment.n_agents, 10);
}

TEST(Config, PaperPresetMatchesTable2) {
  RunConfig c;
  apply_preset(c, "paper");
  EXPECT_EQ(c.environment.n_agents, 10);
  EXPECT_EQ(c.episodes, 10000);
  EXPECT_EQ(c.evaluation_interval, 500);
  EXPECT_EQ(c.algorithm.actor_hidden, (std::vector<std::size_t>{128, 128, 128}));
  EXPECT_EQ(c.algorithm.critic_hidden, (std::vector<std::size_t>{256, 256, 256}));
  EXPECT_EQ(c.algorithm.actor_lr, 1e-4);
  EXPECT_EQ(c.algorithm.critic_lr, 1e-3);
  EXPECT_EQ(c.algorithm.ppo.clip, 0.2);
  EXPECT_EQ(c.algorithm.ppo.epochs, 4u);
  EXPECT_EQ(c.algorithm.ppo.minibatch, 1024u);
  EXPECT_EQ(c.algorithm.ppo.gamma, 0.99);
  EXPECT_EQ(c.algorithm.ppo.gae_lambda, 0.95);
  EXPECT_EQ(c.algorithm.ppo.entropy_coef, 0.01);
  EXPECT_EQ(c.algorithm.q.replay_capacity, 1000000u);
  EXPECT_EQ(c.algorithm.q.batch_size, 1024u);
  EXPECT_EQ(c.algorithm.q.tau, 0.005);
  EXPECT_EQ(c.algorithm.q.ou_theta, 0.15);
  EXPECT_EQ(c.algorithm.q.ou_sigma, 0.2);
  EXPECT_EQ(c.environment.reward.alpha, 0.95);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, DeskPresetDefaults) {
  const auto c = default_config();
  EXPECT_EQ(c.preset, "desk");
  EXPECT_EQ(c.environment.n_agents, 3);
  EXPECT_EQ(c.episodes, 1500);
  EXPECT_EQ(c.rollout_length, 32u);
  EXPECT_EQ(c.algorithm.actor_hidden, (std::vector<std::size_t>{64, 64}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, IniRoundTripPreservesSnapshot) {
  auto c = default_config();
  c.seed = 99;
  c.environment.insurer.theta = 0.37;
  c.study.lambdas = {0.5, 2.0};
  c.sync();
  const auto back = parse_ini(to_ini(c));
  EXPECT_EQ(snapshot(back), snapshot(c));
}

TEST(MetricsCsv, HeaderAndRoundTrip) {
  Gen g(60);
  std::vector<EpisodeMetrics> rows;
  for (int e = 0; e < 30; ++e) {
    for (int i = 0; i < 3; ++i) {
      EpisodeMetrics m;
      m.episode = e;
      m.agent_id = i;
      m.reward = g.normal(0, 1e3);
      m.profit = g.normal(0, 1) / 3.0;
      m.cvar95 = g.uniform(0, 1);
      m.efficiency = g.uniform(0, 1);
      m.win = g.coin(0.3);
      m.premium_rate = g.uniform(0, 0.08);
      m.loss_total = g.uniform(0, 50);
      m.loss_ratio = g.uniform(0, 2);
      m.capital = g.uniform(50, 150);
      rows.push_back(m);
    }
  }
  std::stringstream ss;
  io::write_metrics_csv(ss, rows);
  const std::string text = ss.str();
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "episode,agent_id,reward,profit,cvar95,efficiency,win,premium_rate,loss_total,loss_ratio,capital");
  while (std::getline(lines, line)) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 10);
  std::istringstream in(text);
  const auto back = io::read_metrics_csv(in);
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(checks::metrics_csv(back), text);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(back[k].reward, rows[k].reward);
    EXPECT_EQ(back[k].profit, rows[k].profit);
  }
}

TEST(MetricsCsv, EmptyIsHeaderOnly) {
  std::stringstream ss;
  io::write_metrics_csv(ss, {});
  EXPECT_EQ(ss.str(), std::string(io::kMetricsHeader) + "\n");
  std::istringstream in(ss.str());
  EXPECT_TRUE(io::read_metrics_csv(in).empty());
}

TEST(Trainer, SameSeedIsByteIdentical) {
  for (auto algo : {Algorithm::mappo, Algorithm::q_learning, Algorithm::random, Algorithm::actuarial}) {
    const auto c = with_algorithm(checks::small_run(21, 40), algo);
    Trainer a(c), b(c);
    a.train_to_end();
    b.train_to_end();
    EXPECT_EQ(a.metrics().size(), 40u * 3u);
    EXPECT_EQ(checks::metrics_csv(a.metrics()), checks::metrics_csv(b.metrics())) << to_string(algo);
    EXPECT_EQ(checks::checkpoint_bytes(a.checkpoint()), checks::checkpoint_bytes(b.checkpoint()));
  }
}

TEST(Trainer, DifferentSeedsDiffer) {
  Trainer a(checks::small_run(1, 20)), b(checks::small_run(2, 20));
  a.train_to_end();
  b.train_to_end();
  EXPECT_NE(checks::metrics_csv(a.metrics()), checks::metrics_csv(b.metrics()));
}

TEST(Trainer, CheckpointResumeIsBitExact) {
  for (auto algo : {Algorithm::mappo, Algorithm::mappo_local, Algorithm::q_learning}) {
    const auto c = with_algorithm(checks::small_run(33, 60), algo);
    for (std::int64_t k : {1, 25}) {
      const auto r = checks::checkpoint_resume(c, k);
      EXPECT_TRUE(r.metrics_identical) << to_string(algo) << " k=" << k;
      EXPECT_TRUE(r.checkpoints_identical) << to_string(algo) << " k=" << k;
    }
  }
}

TEST(Trainer, CheckpointFileRoundTrip) {
  const auto dir = scratch("ckpt");
  Trainer t(checks::small_run(4, 10));
  t.train_to_end();
  const auto path = dir / "run.ckpt";
  learn::save_checkpoint(path, t.checkpoint());
  EXPECT_EQ(checks::checkpoint_bytes(learn::load_checkpoint(path)), checks::checkpoint_bytes(t.checkpoint()));
  EXPECT_THROW(learn::load_checkpoint(dir / "missing.ckpt"), std::exception);
}

TEST(Trainer, ZeroEpisodesProducesNoRows) {
  Trainer t(checks::small_run(5, 0));
  t.train_to_end();
  EXPECT_TRUE(t.metrics().empty());
  std::stringstream ss;
  io::write_metrics_csv(ss, t.metrics());
  EXPECT_EQ(ss.str(), std::string(io::kMetricsHeader) + "\n");
}

TEST(Trainer, MetricsRowsAreWellFormed) {
  Trainer t(checks::small_run(6, 30));
  t.train_to_end();
  for (const auto& m : t.metrics()) {
    EXPECT_TRUE(std::isfinite(m.reward) && std::isfinite(m.profit) && std::isfinite(m.cvar95));
    EXPECT_TRUE(m.win == 0 || m.win == 1);
    EXPECT_GE(m.premium_rate, 0.0);
    EXPECT_LE(m.premium_rate, t.config().environment.box.rate_max);
    EXPECT_GE(m.loss_total, 0.0);
    EXPECT_GE(m.agent_id, 0);
    EXPECT_LT(m.agent_id, 3);
  }
  // At most one winner per episode.
  std::map<std::int64_t, int> wins;
  for (const auto& m : t.metrics()) wins[m.episode] += m.win;
  for (const auto& [e, w] : wins) EXPECT_LE(w, 1) << e;
}

TEST(Trainer, EvaluationLeavesTrainingStateUntouched) {
  const auto c = checks::small_run(7, 20);
  Trainer a(c), b(c);
  a.train(10);
  b.train(10);
  (void)a.evaluate(15, 3);
  a.train_to_end();
  b.train_to_end();
  EXPECT_EQ(checks::metrics_csv(a.metrics()), checks::metrics_csv(b.metrics()));
}

TEST(Manifest, RejectsMissingOutputsAndRecordsConfig) {
  const auto dir = scratch("manifest");
  io::RunManifest m;
  m.command = "train";
  m.config = snapshot(default_config());
  m.started_at = io::utc_timestamp();
  m.outputs.push_back({"metrics", dir / "metrics.csv"});
  EXPECT_THROW(io::write_manifest(m, dir / "manifest.json"), std::runtime_error);
  {
    std::ofstream out(dir / "metrics.csv");
    out << io::kMetricsHeader << "\n";
  }
  io::write_manifest(m, dir / "manifest.json");
  std::ifstream in(dir / "manifest.json");
  const auto j = io::json::parse(in);
  for (const char* key : {"version", "command", "started_at", "finished_at", "config", "outputs", "summary"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["config"].size(), snapshot(default_config()).size());
  EXPECT_EQ(j["config"]["run.seed"], "0");
}

TEST(Variance, ConstantStreamConverges) {
  const std::vector<double> s(500, 3.0);
  const auto d = variance_diagnostics(s, 100, 1.0);
  EXPECT_EQ(d.window_std.size(), 5u);
  EXPECT_EQ(d.final_std, 0.0);
  EXPECT_TRUE(d.converged);
}

TEST(Variance, IidStreamIsFlatAndNotConverged) {
  Gen g(61);
  std::vector<double> s(2000);
  for (double& x : s) x = g.normal(0, 2.0);
  const auto d = variance_diagnostics(s, 100, 1.0);
  EXPECT_EQ(d.window_std.size(), 20u);
  EXPECT_EQ(d.trend_label(), "Flat");
  EXPECT_FALSE(d.converged);
}

TEST(Variance, ShrinkingNoiseDecreases) {
  Gen g(62);
  std::vector<double> s(1000);
  for (std::size_t t = 0; t < s.size(); ++t) s[t] = g.normal(0, 3.0 * std::exp(-static_cast<double>(t) / 200.0));
  const auto d = variance_diagnostics(s, 100, 1.0);
  EXPECT_EQ(d.trend_label(), "Decreasing");
  EXPECT_TRUE(d.converged);
  EXPECT_LT(d.final_std, d.initial_std);
}

TEST(Variance, WindowErrors) {
  const std::vector<double> s(50, 1.0);
  EXPECT_THROW(variance_diagnostics(s, 100, 1.0), ConfigError);
  EXPECT_THROW(variance_diagnostics(s, 1, 1.0), ConfigError);
}

TEST(Variance, EpisodeMeanRewardsAveragesAgents) {
  std::vector<EpisodeMetrics> rows;
  for (int e = 0; e < 4; ++e) {
    for (int i = 0; i < 2; ++i) {
      EpisodeMetrics m;
      m.episode = e;
      m.agent_id = i;
      m.reward = e + 2.0 * i;
      rows.push_back(m);
    }
  }
  EXPECT_EQ(episode_mean_rewards(rows), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Stress, ApplyStressWholeRun) {
  auto c = checks::small_run(8, 10);
  market::StressRegime r;
  r.kind = market::StressKind::capacity;
  r.capacity_factor = 0.7;
  const auto s = apply_stress(c, r);
  EXPECT_EQ(s.environment.stress.kind, market::StressKind::capacity);
  EXPECT_EQ(c.environment.stress.kind, market::StressKind::none);
}

TEST(Studies, TinyTournamentSchema) {
  auto c = checks::small_run(9, 20);
  c.study.seeds = 2;
  c.eval_episodes = 10;
  const auto rep = run_baseline_tournament(
      c, {Strategy::marl, Strategy::actuarial, Strategy::random, Strategy::q_baseline});
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.pairs.size(), 6u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.per_seed.size(), 2u);
    EXPECT_EQ(r.column_means.size(), tournament_columns().size());
  }
  const auto j = rep.to_json();
  EXPECT_EQ(j["strategies"].size(), 4u);
  EXPECT_EQ(j["pairwise"].size(), 6u);
  EXPECT_THROW(run_baseline_tournament(c, {}), ConfigError);
}

TEST(Studies, TinyAblationSchema) {
  auto c = checks::small_run(10, 40);
  c.study.seeds = 2;
  c.study.variance_window = 10;
  const auto rep = ablation_ctde(c);
  EXPECT_GE(rep.rows.size(), 2u);
  const auto j = rep.to_json();
  for (const auto& r : j["rows"]) {
    for (const char* key : {"model", "initial_std_median", "final_std_median", "variance_trend", "convergence"}) {
      EXPECT_TRUE(r.contains(key)) << key;
    }
  }
}

TEST(Variance, DeskMarlRunFinalWindowBelowInitial) {
  const auto c = default_config();
  Trainer t(c);
  t.train_to_end();
  const auto series = episode_mean_rewards(t.metrics());
  const auto d = variance_diagnostics(series, c.study.variance_window, c.study.convergence_std_threshold);
  EXPECT_LT(d.final_std, d.initial_std) << "initial " << d.initial_std << " final " << d.final_std;
}
