#pragma once

// Run configuration: defaults, presets, INI parsing with strict key
// checking, and a flat key/value snapshot for manifests.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "treatybid/agents/baselines.hpp"
#include "treatybid/agents/mappo.hpp"
#include "treatybid/error.hpp"
#include "treatybid/market/environment.hpp"

namespace treatybid::experiments {

enum class Algorithm { mappo, mappo_local, random, actuarial, q_learning };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::mappo: return "mappo";
    case Algorithm::mappo_local: return "mappo_local";
    case Algorithm::random: return "random";
    case Algorithm::actuarial: return "actuarial";
    case Algorithm::q_learning: return "q_learning";
  }
  return "mappo";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "mappo" || s == "marl") return Algorithm::mappo;
  if (s == "mappo_local") return Algorithm::mappo_local;
  if (s == "random") return Algorithm::random;
  if (s == "actuarial") return Algorithm::actuarial;
  if (s == "q_learning" || s == "q_baseline") return Algorithm::q_learning;
  throw ConfigError("algorithm: unknown algorithm '" + s + "'");
}

inline bool is_learning(Algorithm a) {
  return a == Algorithm::mappo || a == Algorithm::mappo_local || a == Algorithm::q_learning;
}

struct AlgorithmConfig {
  Algorithm algorithm = Algorithm::mappo;
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double init_log_std = -0.5;
  agents::PPOConfig ppo;
  agents::QConfig q;
  agents::ActuarialTerms actuarial;

  void validate() const {
    require(!actor_hidden.empty() && !critic_hidden.empty(), "algorithm: hidden layer lists must be non-empty");
    for (auto h : actor_hidden) require(h > 0, "algorithm: actor_hidden sizes must be positive");
    for (auto h : critic_hidden) require(h > 0, "algorithm: critic_hidden sizes must be positive");
    require(actor_lr > 0.0 && critic_lr > 0.0, "algorithm: learning rates must be > 0");
    require(init_log_std >= agents::kLogStdMin && init_log_std <= agents::kLogStdMax,
            "algorithm: init_log_std must lie in [-5, 1]");
    ppo.validate();
    q.validate();
    require(actuarial.loading >= 0.0, "algorithm: actuarial_loading must be >= 0");
  }
};

/// Multi-run study settings.
struct StudyConfig {
  std::size_t seeds = 5;
  std::size_t stress_seeds = 10;
  std::size_t lambda_seeds = 3;
  std::size_t hparam_seeds = 3;
  std::vector<double> lambdas{0.1, 10.0};
  std::vector<double> hparam_actor_lr{3e-4, 1e-3};
  std::vector<double> hparam_minibatch{8, 16};
  std::size_t bootstrap_resamples = 1000;
  double bootstrap_level = 0.95;
  std::size_t variance_window = 100;
  double convergence_std_threshold = 1.0;
  /// Final fraction of training episodes compared in learning curves.
  double final_fraction = 0.1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::int64_t episodes = 1500;
  std::int64_t evaluation_interval = 500;
  std::int64_t eval_episodes = 200;
  std::size_t rollout_length = 32;
  market::EnvironmentConfig environment;
  AlgorithmConfig algorithm;
  StudyConfig study;
  std::string output_dir = "out";
  std::int64_t checkpoint_interval = 0;
  bool write_episode_log = true;
  std::string preset = "desk";

  int n_agents() const { return environment.n_agents; }

  /// Keeps derived fields (horizon) consistent; called after every edit.
  void sync() { environment.horizon = episodes; }

  void validate() const {
    require(episodes >= 0, "run: episodes must be >= 0");
    require(evaluation_interval >= 1, "run: evaluation_interval must be >= 1");
    require(eval_episodes >= 1, "run: eval_episodes must be >= 1");
    require(rollout_length >= 1, "run: rollout_length must be >= 1");
    require(checkpoint_interval >= 0, "output: checkpoint_interval must be >= 0");
    require(study.seeds >= 1 && study.stress_seeds >= 1 && study.lambda_seeds >= 1 && study.hparam_seeds >= 1,
            "run: seed counts must be >= 1");
    require(!study.lambdas.empty(), "run: lambdas must be non-empty");
    require(study.bootstrap_resamples >= 100, "run: bootstrap_resamples must be >= 100");
    require(study.variance_window >= 2, "run: variance_window must be >= 2");
    require(study.final_fraction > 0.0 && study.final_fraction <= 1.0, "run: final_fraction must lie in (0,1]");
    environment.validate();
    algorithm.validate();
    const auto& s = environment.stress;
    if (s.kind != market::StressKind::none && !s.whole_run()) {
      require(s.end_episode < std::max<std::int64_t>(episodes, 1) || episodes == 0,
              "stress: activation window must lie within the run");
    }
  }
};

/// Table 2 scale.
inline void apply_paper_preset(RunConfig& c) {
  c.preset = "paper";
  c.environment.n_agents = 10;
  c.episodes = 10000;
  c.evaluation_interval = 500;
  c.rollout_length = 100;
  c.algorithm.actor_hidden = {128, 128, 128};
  c.algorithm.critic_hidden = {256, 256, 256};
  c.algorithm.actor_lr = 1e-4;
  c.algorithm.critic_lr = 1e-3;
  c.algorithm.ppo.minibatch = 1024;
  c.algorithm.ppo.gamma = 0.99;
  c.algorithm.ppo.entropy_coef = 0.01;
  c.algorithm.q.gamma = 0.99;
  c.algorithm.q.replay_capacity = 1000000;
  c.algorithm.q.batch_size = 1024;
  c.algorithm.q.tau = 0.005;
  c.algorithm.q.ou_theta = 0.15;
  c.algorithm.q.ou_sigma = 0.2;
  c.algorithm.q.hidden = {128, 128, 128};
  c.environment.reward.alpha = 0.95;
  c.study.lambdas = {0.01, 0.1, 1.0, 10.0};
  c.study.seeds = 5;
  c.study.stress_seeds = 20;
  c.sync();
}

/// Desk scale: 3 agents, 1,500 episodes, (64, 64) networks, rollout 32.
inline void apply_desk_preset(RunConfig& c) {
  c = RunConfig{};
  c.preset = "desk";
  c.environment.n_agents = 3;
  c.episodes = 1500;
  c.evaluation_interval = 500;
  c.eval_episodes = 1000;
  c.rollout_length = 32;
  c.algorithm.actor_hidden = {64, 64};
  c.algorithm.critic_hidden = {64, 64};
  c.algorithm.actor_lr = 1e-3;
  c.algorithm.critic_lr = 1e-3;
  c.algorithm.ppo.minibatch = 8;
  c.algorithm.ppo.epochs = 4;
  c.algorithm.ppo.gamma = 0.9;
  c.algorithm.ppo.entropy_coef = 0.0;
  c.algorithm.q.gamma = 0.9;
  c.algorithm.q.replay_capacity = 100000;
  c.algorithm.q.batch_size = 32;
  c.algorithm.q.hidden = {64, 64};
  c.sync();
}

inline RunConfig default_config() {
  RunConfig c;
  apply_desk_preset(c);
  return c;
}

inline void apply_preset(RunConfig& c, const std::string& name) {
  if (name == "desk") {
    apply_desk_preset(c);
  } else if (name == "paper") {
    apply_desk_preset(c);
    apply_paper_preset(c);
  } else {
    throw ConfigError("run: unknown preset '" + name + "'");
  }
}

namespace parse {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

inline double real(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(t, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
  if (pos != t.size()) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return x;
}

inline std::int64_t integer(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(t, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
  if (pos != t.size()) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return x;
}

inline std::size_t count(const std::string& key, const std::string& v) {
  const auto x = integer(key, v);
  if (x < 0) throw ConfigError("config: " + key + " must be >= 0");
  return static_cast<std::size_t>(x);
}

inline bool boolean(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

/// Comma-separated list; optional surrounding brackets are ignored.
inline std::vector<std::string> split(const std::string& v) {
  std::vector<std::string> out;
  std::string body = trim(v);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> reals(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split(v)) out.push_back(real(key, s));
  return out;
}

inline std::vector<std::size_t> counts(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split(v)) out.push_back(count(key, s));
  return out;
}

/// Shortest text that parses back to the same double.
inline std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string fmt(std::size_t x) { return std::to_string(x); }

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

}  // namespace parse

struct KeyBinding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

/// Every recognized key, bound to a field of `c`.
inline std::vector<KeyBinding> bind_keys(RunConfig& c) {
  std::vector<KeyBinding> b;
  auto real = [&b](const std::string& sec, const std::string& key, double& field) {
    const std::string name = sec + "." + key;
    b.push_back({sec, key, [&field, name](const std::string& v) { field = parse::real(name, v); },
                 [&field] { return parse::fmt(field); }});
  };
  auto count = [&b](const std::string& sec, const std::string& key, std::size_t& field) {
    const std::string name = sec + "." + key;
    b.push_back({sec, key, [&field, name](const std::string& v) { field = parse::count(name, v); },
                 [&field] { return std::to_string(field); }});
  };
  auto integer = [&b](const std::string& sec, const std::string& key, std::int64_t& field) {
    const std::string name = sec + "." + key;
    b.push_back({sec, key, [&field, name](const std::string& v) { field = parse::integer(name, v); },
                 [&field] { return std::to_string(field); }});
  };
  auto flag = [&b](const std::string& sec, const std::string& key, bool& field) {
    const std::string name = sec + "." + key;
    b.push_back({sec, key, [&field, name](const std::string& v) { field = parse::boolean(name, v); },
                 [&field] { return std::string(field ? "true" : "false"); }});
  };
  auto range = [&](const std::string& sec, const std::string& key, market::Range& r) {
    real(sec, key + "_min", r.lo);
    real(sec, key + "_max", r.hi);
  };
  auto sizes = [&b](const std::string& sec, const std::string& key, std::vector<std::size_t>& field) {
    const std::string name = sec + "." + key;
    b.push_back({sec, key, [&field, name](const std::string& v) { field = parse::counts(name, v); },
                 [&field] { return parse::join(field); }});
  };
  auto reals = [&b](const std::string& sec, const std::string& key, std::vector<double>& field) {
    const std::string name = sec + "." + key;
    b.push_back({sec, key, [&field, name](const std::string& v) { field = parse::reals(name, v); },
                 [&field] { return parse::join(field); }});
  };

  // [run]
  b.push_back({"run", "seed", [&c](const std::string& v) {
                 const auto x = parse::integer("run.seed", v);
                 if (x < 0) throw ConfigError("config: run.seed must be >= 0");
                 c.seed = static_cast<std::uint64_t>(x);
               },
               [&c] { return std::to_string(c.seed); }});
  b.push_back({"run", "n_agents", [&c](const std::string& v) {
                 c.environment.n_agents = static_cast<int>(parse::integer("run.n_agents", v));
               },
               [&c] { return std::to_string(c.environment.n_agents); }});
  integer("run", "episodes", c.episodes);
  integer("run", "evaluation_interval", c.evaluation_interval);
  integer("run", "eval_episodes", c.eval_episodes);
  count("run", "rollout_length", c.rollout_length);
  count("run", "seeds", c.study.seeds);
  count("run", "stress_seeds", c.study.stress_seeds);
  count("run", "lambda_seeds", c.study.lambda_seeds);
  count("run", "hparam_seeds", c.study.hparam_seeds);
  reals("run", "lambdas", c.study.lambdas);
  reals("run", "hparam_actor_lr", c.study.hparam_actor_lr);
  reals("run", "hparam_minibatch", c.study.hparam_minibatch);
  count("run", "bootstrap_resamples", c.study.bootstrap_resamples);
  real("run", "bootstrap_level", c.study.bootstrap_level);
  count("run", "variance_window", c.study.variance_window);
  real("run", "convergence_std_threshold", c.study.convergence_std_threshold);
  real("run", "final_fraction", c.study.final_fraction);

  // [environment]
  auto& e = c.environment;
  real("environment", "exposure_mu", e.market.exposure_mu);
  real("environment", "exposure_sigma", e.market.exposure_sigma);
  b.push_back({"environment", "n_lines",
               [&e](const std::string& v) { e.market.n_lines = static_cast<int>(parse::integer("environment.n_lines", v)); },
               [&e] { return std::to_string(e.market.n_lines); }});
  real("environment", "quota_share_prob", e.market.quota_share_prob);
  range("environment", "attachment", e.market.attachment);
  range("environment", "limit", e.market.limit);
  range("environment", "retention", e.market.retention);
  range("environment", "attritional_freq", e.market.attritional_freq);
  range("environment", "attritional_severity_mean", e.market.attritional_severity_mean);
  real("environment", "attritional_severity_sigma", e.market.attritional_severity_sigma);
  range("environment", "cat_prob", e.market.cat_prob);
  real("environment", "cat_tail_index", e.market.cat_tail_index);
  range("environment", "cat_scale", e.market.cat_scale);
  real("environment", "theta", e.insurer.theta);
  real("environment", "sigma_noise", e.insurer.sigma_noise);
  real("environment", "delta_incumbent", e.insurer.delta_incumbent);
  flag("environment", "last_look_enabled", e.insurer.last_look_enabled);
  real("environment", "lambda_insurer", e.insurer.lambda_insurer);
  real("environment", "max_loading", e.insurer.max_loading);
  real("environment", "shift_epsilon", e.insurer.shift_epsilon);
  real("environment", "last_look_discount", e.insurer.last_look_discount);
  real("environment", "rate_min", e.box.rate_min);
  real("environment", "rate_max", e.box.rate_max);
  real("environment", "commission_max", e.box.commission_max);
  real("environment", "attachment_offset_max", e.box.attachment_offset_max);
  real("environment", "limit_factor_min", e.box.limit_factor_min);
  real("environment", "limit_factor_max", e.box.limit_factor_max);
  real("environment", "initial_capital", e.initial_capital);
  real("environment", "kappa", e.kappa);
  real("environment", "replenish_rate", e.replenish_rate);
  real("environment", "capital_floor", e.capital_floor);
  count("environment", "window", e.window);
  real("environment", "latency_min_ms", e.latency_min_ms);
  real("environment", "latency_max_ms", e.latency_max_ms);
  real("environment", "latency_jitter", e.latency_jitter);
  real("environment", "latency_scale_ms", e.latency_scale_ms);
  count("environment", "pricing_samples", e.pricing_samples);

  // [reward]
  real("reward", "lambda_cvar", e.reward.lambda_cvar);
  real("reward", "gamma_eff", e.reward.gamma_eff);
  real("reward", "alpha", e.reward.alpha);
  real("reward", "w1", e.reward.efficiency_weights[0]);
  real("reward", "w2", e.reward.efficiency_weights[1]);
  real("reward", "w3", e.reward.efficiency_weights[2]);

  // [algorithm]
  auto& a = c.algorithm;
  b.push_back({"algorithm", "algorithm", [&a](const std::string& v) { a.algorithm = parse_algorithm(parse::trim(v)); },
               [&a] { return std::string(to_string(a.algorithm)); }});
  sizes("algorithm", "actor_hidden", a.actor_hidden);
  sizes("algorithm", "critic_hidden", a.critic_hidden);
  real("algorithm", "actor_lr", a.actor_lr);
  real("algorithm", "critic_lr", a.critic_lr);
  real("algorithm", "init_log_std", a.init_log_std);
  real("algorithm", "clip", a.ppo.clip);
  count("algorithm", "epochs", a.ppo.epochs);
  count("algorithm", "minibatch", a.ppo.minibatch);
  real("algorithm", "gamma", a.ppo.gamma);
  real("algorithm", "gae_lambda", a.ppo.gae_lambda);
  real("algorithm", "entropy_coef", a.ppo.entropy_coef);
  real("algorithm", "max_grad_norm", a.ppo.max_grad_norm);
  flag("algorithm", "normalize_values", a.ppo.normalize_values);
  count("algorithm", "q_levels", a.q.levels);
  sizes("algorithm", "q_hidden", a.q.hidden);
  real("algorithm", "q_lr", a.q.lr);
  real("algorithm", "q_gamma", a.q.gamma);
  real("algorithm", "tau", a.q.tau);
  count("algorithm", "replay_capacity", a.q.replay_capacity);
  count("algorithm", "q_batch_size", a.q.batch_size);
  real("algorithm", "epsilon_start", a.q.epsilon_start);
  real("algorithm", "epsilon_end", a.q.epsilon_end);
  integer("algorithm", "epsilon_decay_episodes", a.q.epsilon_decay_episodes);
  real("algorithm", "ou_theta", a.q.ou_theta);
  real("algorithm", "ou_sigma", a.q.ou_sigma);
  real("algorithm", "ou_scale", a.q.ou_scale);
  count("algorithm", "q_updates_per_step", a.q.updates_per_step);
  real("algorithm", "actuarial_loading", a.actuarial.loading);

  // [stress]
  auto& s = e.stress;
  b.push_back({"stress", "regime", [&s](const std::string& v) { s.kind = market::parse_stress_kind(parse::trim(v)); },
               [&s] { return std::string(market::to_string(s.kind)); }});
  real("stress", "cat_multiplier", s.cat_multiplier);
  real("stress", "capacity_factor", s.capacity_factor);
  integer("stress", "start_episode", s.start_episode);
  integer("stress", "end_episode", s.end_episode);

  // [output]
  b.push_back({"output", "dir", [&c](const std::string& v) { c.output_dir = parse::trim(v); },
               [&c] { return c.output_dir; }});
  integer("output", "checkpoint_interval", c.checkpoint_interval);
  flag("output", "write_episode_log", c.write_episode_log);
  return b;
}

/// Sets one "section.key" value; unknown keys are errors.
inline void set_key(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  for (auto& kb : bind_keys(c)) {
    if (kb.section == section && kb.key == key) {
      kb.set(value);
      c.sync();
      return;
    }
  }
  throw ConfigError("config: unknown key '" + section + "." + key + "'");
}

/// Flat snapshot of every key, ordered by section then key.
inline std::map<std::string, std::string> snapshot(const RunConfig& c) {
  RunConfig copy = c;
  std::map<std::string, std::string> out;
  for (const auto& kb : bind_keys(copy)) out[kb.section + "." + kb.key] = kb.get();
  out["run.preset"] = c.preset;
  return out;
}

inline RunConfig parse_config_stream(std::istream& in, const std::string& origin = "<stream>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: cannot parse " + origin + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  static const std::vector<std::string> sections{"run", "environment", "reward", "algorithm", "stress", "output"};
  RunConfig c = default_config();
  for (const auto& [name, sec] : tree) {
    if (std::find(sections.begin(), sections.end(), name) == sections.end()) {
      if (sec.empty()) throw ConfigError("config: key '" + name + "' outside any section in " + origin);
      throw ConfigError("config: unknown section [" + name + "] in " + origin);
    }
  }
  if (auto run = tree.get_child_optional("run")) {
    if (auto p = run->get_optional<std::string>("preset")) apply_preset(c, parse::trim(*p));
  }
  for (const auto& [name, sec] : tree) {
    for (const auto& [key, val] : sec) {
      if (name == "run" && key == "preset") continue;
      set_key(c, name, key, val.data());
    }
  }
  c.sync();
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config: file not found: " + path);
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_config_stream(in, path);
}

inline std::string to_ini(const RunConfig& c) {
  std::ostringstream out;
  std::string current;
  out << "[run]\npreset = " << c.preset << "\n";
  current = "run";
  RunConfig copy = c;
  for (const auto& kb : bind_keys(copy)) {
    if (kb.section != current) {
      out << "\n[" << kb.section << "]\n";
      current = kb.section;
    }
    out << kb.key << " = " << kb.get() << "\n";
  }
  return out.str();
}

}  // namespace treatybid::experiments
