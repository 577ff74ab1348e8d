// Command-line front end: train, tournament, sweeps, stress, ablation and
// diagnostics. Errors are reported as one JSON line on stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treatybid/error.hpp"
#include "treatybid/experiments/config.hpp"
#include "treatybid/experiments/studies.hpp"
#include "treatybid/experiments/trainer.hpp"
#include "treatybid/io/outputs.hpp"
#include "treatybid/learn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace treatybid;
using namespace treatybid::experiments;
using io::json;

namespace {

constexpr const char* kSeedEnv = "TREATYBID_SEED";

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> episodes;
  std::string out;
  std::string stress;
  std::size_t jobs = 1;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "Config file (INI sections [run], [environment], ...)");
  sub->add_option("--seed", o.seed, "Master seed (overrides config and " + std::string(kSeedEnv) + ")");
  sub->add_option("--episodes", o.episodes, "Training episodes per run")->check(CLI::NonNegativeNumber);
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--stress", o.stress, "Stress regime")->check(CLI::IsMember({"none", "catastrophe", "capacity"}));
  sub->add_option("--jobs", o.jobs, "Concurrent runs for multi-seed studies")->check(CLI::PositiveNumber);
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size() || text.front() == '-') {
    throw ConfigError(origin + ": seed must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

/// Config file, then environment seed, then flags.
RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c = o.config_path.empty() ? default_config() : load_config(o.config_path);
  if (const char* env = std::getenv(kSeedEnv); env && *env) c.seed = parse_seed(env, kSeedEnv);
  if (o.seed) c.seed = *o.seed;
  if (o.episodes) {
    c.episodes = *o.episodes;
    c.sync();
  }
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.stress.empty()) c.environment.stress.kind = market::parse_stress_kind(o.stress);
  c.validate();
  return c;
}

io::RunManifest start_manifest(const std::string& command, const RunConfig& c) {
  io::RunManifest m;
  m.command = command;
  m.config = snapshot(c);
  m.started_at = io::utc_timestamp();
  return m;
}

void write_snapshots_csv(const std::vector<EvaluationSnapshot>& snaps, const fs::path& path) {
  auto out = io::open_output(path);
  out << "after_episode,mean_reward,mean_profit,cvar95\n";
  for (const auto& s : snaps) {
    out << s.after_episode << ',' << io::fmt17(s.mean_reward) << ',' << io::fmt17(s.mean_profit) << ','
        << io::fmt17(s.cvar95) << '\n';
  }
  io::close_checked(out, path);
}

json summary_json(const EvalSummary& s) {
  return json{{"episodes", s.episodes},          {"mean_reward", io::num(s.mean_reward)},
              {"mean_profit", io::num(s.mean_profit)}, {"cvar95", io::num(s.cvar95)},
              {"sharpe", io::num(s.sharpe)},     {"loss_ratio", io::num(s.loss_ratio)},
              {"diversification", io::num(s.diversification)},
              {"bid_success_rate", io::num(s.bid_success_rate)}};
}

int cmd_train(const CommonOptions& o, const std::string& resume) {
  const RunConfig c = resolve_config(o);
  auto manifest = start_manifest("train", c);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);

  Trainer t(c);
  if (!resume.empty()) t.restore(learn::load_checkpoint(resume));

  std::optional<io::EpisodeLog> log;
  const fs::path log_path = dir / "episodes.jsonl";
  if (c.write_episode_log) {
    log.emplace(log_path);
    t.set_record_hook([&](const market::EpisodeRecord& r) { log->write(r); });
  }

  const fs::path metrics_path = dir / "metrics.csv";
  try {
    if (c.checkpoint_interval > 0) {
      while (t.episode() < c.episodes) {
        t.train(c.checkpoint_interval);
        learn::save_checkpoint((dir / ("checkpoint_" + std::to_string(t.episode()) + ".ckpt")).string(),
                               t.checkpoint());
      }
    } else {
      t.train_to_end();
    }
  } catch (...) {
    // Keep what was produced before the failure.
    io::emit_metrics(t.metrics(), metrics_path);
    if (log) log->close();
    throw;
  }

  io::emit_metrics(t.metrics(), metrics_path);
  write_snapshots_csv(t.snapshots(), dir / "snapshots.csv");
  const fs::path ckpt = checkpoint_path(dir, c.seed);
  learn::save_checkpoint(ckpt.string(), t.checkpoint());
  const auto final_eval = t.evaluate(c.eval_episodes, kFinalEval);

  manifest.outputs.emplace_back("metrics", metrics_path);
  manifest.outputs.emplace_back("snapshots", dir / "snapshots.csv");
  manifest.outputs.emplace_back("checkpoint", ckpt);
  if (log) {
    log->close();
    // An empty run leaves an empty log, which the manifest check rejects.
    if (fs::file_size(log_path) > 0) manifest.outputs.emplace_back("episode_log", log_path);
  }
  manifest.summary = {{"seed", c.seed},
                      {"episodes_trained", t.episode()},
                      {"resumed_from", resume.empty() ? json(nullptr) : json(resume)},
                      {"final_evaluation", summary_json(final_eval)}};
  io::write_manifest(manifest, dir / "manifest.json");
  std::cout << (dir / "manifest.json").string() << '\n';
  return 0;
}

/// Writes a study report plus its manifest.
int finish_study(io::RunManifest manifest, const RunConfig& c, const std::string& file, const json& report) {
  const fs::path dir = c.output_dir;
  const fs::path path = dir / file;
  io::write_json(report, path);
  manifest.outputs.emplace_back("report", path);
  manifest.summary = report;
  io::write_manifest(manifest, dir / "manifest.json");
  std::cout << path.string() << '\n';
  return 0;
}

std::vector<Strategy> parse_roster(const std::string& text) {
  std::vector<Strategy> out;
  for (const auto& s : parse::split(text)) out.push_back(parse_strategy(parse::trim(s)));
  if (out.empty()) throw ConfigError("tournament: roster must be non-empty");
  return out;
}

int cmd_tournament(const CommonOptions& o, const std::string& roster, const std::string& checkpoints) {
  const RunConfig c = resolve_config(o);
  std::optional<fs::path> dir;
  if (!checkpoints.empty()) dir = checkpoints;
  const auto rep = run_baseline_tournament(c, parse_roster(roster), dir, o.jobs);
  return finish_study(start_manifest("tournament", c), c, "tournament.json", rep.to_json());
}

int cmd_sweep_lambda(const CommonOptions& o, const std::string& lambdas) {
  const RunConfig c = resolve_config(o);
  const auto ls = lambdas.empty() ? c.study.lambdas : parse::reals("--lambdas", lambdas);
  const auto rep = sweep_lambda(c, ls, o.jobs);
  return finish_study(start_manifest("sweep-lambda", c), c, "lambda_sweep.json", rep.to_json());
}

int cmd_sweep_hparams(const CommonOptions& o) {
  const RunConfig c = resolve_config(o);
  std::vector<std::size_t> mbs;
  for (double m : c.study.hparam_minibatch) mbs.push_back(static_cast<std::size_t>(m));
  const auto rep = sweep_hyperparams(c, c.study.hparam_actor_lr, mbs, o.jobs);
  return finish_study(start_manifest("sweep-hparams", c), c, "hparam_sweep.json", rep.to_json());
}

int cmd_stress(const CommonOptions& o) {
  RunConfig c = resolve_config(o);
  market::StressRegime regime = c.environment.stress;
  if (regime.kind == market::StressKind::none) {
    throw ConfigError("stress: choose a regime with --stress catastrophe|capacity");
  }
  // The study trains unstressed and applies the regime only to its stressed arm.
  c.environment.stress = {};
  const auto rep = run_stress_study(c, regime, o.jobs);
  return finish_study(start_manifest("stress", c), c, std::string("stress_") + market::to_string(regime.kind) + ".json",
                      rep.to_json());
}

int cmd_ablate(const CommonOptions& o) {
  const RunConfig c = resolve_config(o);
  const auto rep = ablation_ctde(c, o.jobs);
  return finish_study(start_manifest("ablate", c), c, "ablation.json", rep.to_json());
}

int cmd_diagnose(const CommonOptions& o, const std::string& metrics, std::optional<std::int64_t> shock_end) {
  RunConfig c = resolve_config(o);
  json report = json::object();
  if (metrics.empty()) {
    // No metrics given: run the windowed-shock recovery diagnostic.
    auto kind = c.environment.stress.kind;
    if (kind == market::StressKind::none) kind = market::StressKind::catastrophe;
    c.environment.stress = {};
    const auto rep = shock_recovery(c, kind);
    report["recovery"] = rep.to_json();
  } else {
    const auto series = episode_mean_rewards(io::load_metrics(metrics));
    report["metrics"] = metrics;
    report["variance"] =
        variance_diagnostics(series, c.study.variance_window, c.study.convergence_std_threshold).to_json();
    if (shock_end) report["recovery_slope"] = io::to_json(recovery_slope(series, *shock_end, 200));
  }
  return finish_study(start_manifest("diagnose", c), c, "diagnostics.json", report);
}

void fail(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent reinsurance treaty bidding simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", io::kVersion);

  CommonOptions common;
  std::string resume;
  std::string roster = "marl,actuarial,random,q_baseline";
  std::string checkpoints;
  std::string lambdas;
  std::string metrics;
  std::optional<std::int64_t> shock_end;

  auto* train = app.add_subcommand("train", "Train one population and write metrics, log, checkpoint, manifest");
  add_common(train, common);
  train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  auto* tournament = app.add_subcommand("tournament", "Evaluate strategies on matched seeds");
  add_common(tournament, common);
  tournament->add_option("--roster", roster, "Comma-separated: marl,actuarial,random,q_baseline");
  tournament->add_option("--checkpoints", checkpoints, "Directory of seed_<n>.ckpt MARL checkpoints");

  auto* sweep_l = app.add_subcommand("sweep-lambda", "Risk-aversion sweep and Pareto frontier");
  add_common(sweep_l, common);
  sweep_l->add_option("--lambdas", lambdas, "Comma-separated lambda values");

  auto* sweep_h = app.add_subcommand("sweep-hparams", "Actor learning rate x minibatch grid with ANOVA");
  add_common(sweep_h, common);

  auto* stress = app.add_subcommand("stress", "Matched-seed stress study");
  add_common(stress, common);

  auto* ablate = app.add_subcommand("ablate", "CTDE vs decentralized critic vs random");
  add_common(ablate, common);

  auto* diagnose = app.add_subcommand("diagnose", "Variance diagnostics or post-shock recovery slope");
  add_common(diagnose, common);
  diagnose->add_option("--metrics", metrics, "Metrics CSV to analyse");
  diagnose->add_option("--shock-end", shock_end, "Last shocked episode, for the recovery slope");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*train) return cmd_train(common, resume);
    if (*tournament) return cmd_tournament(common, roster, checkpoints);
    if (*sweep_l) return cmd_sweep_lambda(common, lambdas);
    if (*sweep_h) return cmd_sweep_hparams(common);
    if (*stress) return cmd_stress(common);
    if (*ablate) return cmd_ablate(common);
    if (*diagnose) return cmd_diagnose(common, metrics, shock_end);
  } catch (const ConfigError& e) {
    fail("config", e.what());
    return 2;
  } catch (const FormatError& e) {
    fail("format", e.what());
    return 3;
  } catch (const NumericalError& e) {
    fail("numerical", e.what());
    return 4;
  } catch (const std::exception& e) {
    fail("runtime", e.what());
    return 1;
  }
  return 1;
}
