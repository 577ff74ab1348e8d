#pragma once

// Algorithm 1: the collect-then-update training loop, deterministic
// evaluation rollouts, and checkpoint / resume.

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "treatybid/agents/baselines.hpp"
#include "treatybid/agents/mappo.hpp"
#include "treatybid/agents/policy.hpp"
#include "treatybid/error.hpp"
#include "treatybid/experiments/config.hpp"
#include "treatybid/io/binary.hpp"
#include "treatybid/learn/checkpoint.hpp"
#include "treatybid/market/environment.hpp"
#include "treatybid/risk/metrics.hpp"

namespace treatybid::experiments {

/// One CSV row: one agent in one episode.
struct EpisodeMetrics {
  std::int64_t episode = 0;
  int agent_id = 0;
  double reward = 0.0;
  double profit = 0.0;
  double cvar95 = 0.0;
  double efficiency = 0.0;
  int win = 0;
  double premium_rate = 0.0;
  double loss_total = 0.0;
  /// Cumulative claims over cumulative premium; NaN before the first win.
  double loss_ratio = 0.0;
  double capital = 0.0;

  bool operator==(const EpisodeMetrics& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return episode == o.episode && agent_id == o.agent_id && same(reward, o.reward) && same(profit, o.profit) &&
           same(cvar95, o.cvar95) && same(efficiency, o.efficiency) && win == o.win &&
           same(premium_rate, o.premium_rate) && same(loss_total, o.loss_total) && same(loss_ratio, o.loss_ratio) &&
           same(capital, o.capital);
  }
};

inline std::vector<EpisodeMetrics> metrics_rows(const market::EpisodeRecord& rec,
                                                const std::vector<market::PortfolioState>& portfolios) {
  std::vector<EpisodeMetrics> rows;
  for (const auto& s : rec.agents) {
    EpisodeMetrics m;
    m.episode = rec.episode;
    m.agent_id = s.agent;
    m.reward = s.reward;
    m.profit = s.profit;
    m.cvar95 = s.cvar;
    m.efficiency = s.efficiency;
    m.win = s.won ? 1 : 0;
    m.premium_rate = s.won ? rec.outcome.bound_terms->premium_rate : s.bid.premium_rate;
    m.loss_total = rec.loss.total();
    const auto& p = portfolios.at(static_cast<std::size_t>(s.agent));
    m.loss_ratio = p.premium_earned > 0.0 ? risk::loss_ratio(p.claims_paid, p.premium_earned)
                                          : std::numeric_limits<double>::quiet_NaN();
    m.capital = s.capital;
    rows.push_back(m);
  }
  return rows;
}

/// Aggregates over an evaluation rollout.
struct EvalSummary {
  std::int64_t episodes = 0;
  int n_agents = 0;
  /// Mean reward across agents, one entry per episode.
  std::vector<double> episode_mean_reward;
  std::vector<double> episode_mean_profit;
  /// Every (episode, agent) profit.
  std::vector<double> agent_profits;
  std::vector<double> bid_rates;
  double mean_reward = 0.0;
  double mean_profit = 0.0;
  double cvar95 = 0.0;
  double sharpe = std::numeric_limits<double>::quiet_NaN();
  double loss_ratio = std::numeric_limits<double>::quiet_NaN();
  double diversification = std::numeric_limits<double>::quiet_NaN();
  double bid_success_rate = 0.0;
  double bid_std = 0.0;
  std::uint64_t placed = 0;
};

inline EvalSummary summarize(const std::vector<market::EpisodeRecord>& records, int n_agents, int n_lines,
                             double alpha) {
  EvalSummary s;
  s.episodes = static_cast<std::int64_t>(records.size());
  s.n_agents = n_agents;
  double premium = 0.0;
  double claims = 0.0;
  std::uint64_t made = 0;
  std::uint64_t won = 0;
  std::vector<double> by_line(static_cast<std::size_t>(n_lines), 0.0);
  for (const auto& rec : records) {
    double r = 0.0;
    double p = 0.0;
    if (rec.placed()) ++s.placed;
    for (const auto& a : rec.agents) {
      r += a.reward;
      p += a.profit;
      s.agent_profits.push_back(a.profit);
      s.bid_rates.push_back(a.bid.premium_rate);
      if (a.participated) ++made;
      if (a.won) {
        ++won;
        premium += a.premium;
        claims += a.claim;
        by_line[static_cast<std::size_t>(rec.treaty.line)] += a.premium;
      }
    }
    s.episode_mean_reward.push_back(r / n_agents);
    s.episode_mean_profit.push_back(p / n_agents);
  }
  if (records.empty()) return s;
  s.mean_reward = risk::mean(s.episode_mean_reward);
  s.mean_profit = risk::mean(s.episode_mean_profit);
  std::vector<double> losses;
  losses.reserve(s.agent_profits.size());
  for (double x : s.agent_profits) losses.push_back(-x);
  s.cvar95 = risk::cvar(losses, alpha);
  if (risk::population_std(s.agent_profits) > 0.0) s.sharpe = risk::sharpe(s.agent_profits);
  if (premium > 0.0) {
    s.loss_ratio = risk::loss_ratio(claims, premium);
    s.diversification = risk::diversification(by_line);
  }
  s.bid_success_rate = made > 0 ? static_cast<double>(won) / static_cast<double>(made) : 0.0;
  s.bid_std = risk::population_std(s.bid_rates);
  return s;
}

/// Seeds the evaluation environment: shared by every strategy evaluated
/// under the same run seed and index.
inline std::uint64_t evaluation_seed(std::uint64_t run_seed, std::uint64_t index) {
  return splitmix64(splitmix64(run_seed ^ fnv1a("evaluation")) + index);
}

struct EvaluationSnapshot {
  std::int64_t after_episode = 0;
  double mean_reward = 0.0;
  double mean_profit = 0.0;
  double cvar95 = 0.0;
};

class Trainer {
 public:
  explicit Trainer(RunConfig cfg)
      : cfg_(std::move(cfg)),
        env_(env_config(cfg_), cfg_.seed),
        update_rng_(substream(cfg_.seed, "update")) {
    cfg_.validate();
    const int n = cfg_.n_agents();
    Engine init = substream(cfg_.seed, "init");
    const std::size_t obs_dim = cfg_.environment.observation_dim();
    const auto& a = cfg_.algorithm;
    for (int i = 0; i < n; ++i) policy_rng_.push_back(substream(cfg_.seed, "policy", static_cast<std::uint64_t>(i)));
    switch (a.algorithm) {
      case Algorithm::mappo:
      case Algorithm::mappo_local: {
        for (int i = 0; i < n; ++i) {
          policies_.emplace_back(obs_dim, market::kActionDim, a.actor_hidden, a.init_log_std, a.actor_lr, init);
        }
        const auto kind = a.algorithm == Algorithm::mappo ? agents::CriticKind::central : agents::CriticKind::local;
        critics_ = agents::Critics(kind, n, obs_dim, agents::global_state_dim(cfg_.environment), a.critic_hidden,
                                   a.critic_lr, init, a.ppo.normalize_values);
        buffer_ = agents::RolloutBuffer(static_cast<std::size_t>(n), cfg_.rollout_length);
        break;
      }
      case Algorithm::q_learning:
        for (int i = 0; i < n; ++i) q_.emplace_back(obs_dim, a.q, init);
        break;
      case Algorithm::random:
      case Algorithm::actuarial:
        break;
    }
  }

  static market::EnvironmentConfig env_config(const RunConfig& c) {
    market::EnvironmentConfig e = c.environment;
    e.horizon = c.episodes;
    return e;
  }

  const RunConfig& config() const { return cfg_; }
  std::int64_t episode() const { return env_.episode(); }
  const market::MarketEnvironment& environment() const { return env_; }
  const std::vector<EpisodeMetrics>& metrics() const { return metrics_; }
  const std::vector<EvaluationSnapshot>& snapshots() const { return snapshots_; }
  const std::vector<agents::UpdateStats>& update_history() const { return updates_; }
  const std::vector<agents::GaussianPolicy>& policies() const { return policies_; }
  const agents::Critics& critics() const { return critics_; }
  const std::vector<agents::QBaselineState>& q_states() const { return q_; }

  /// Called with every training record, e.g. to stream the episode log.
  void set_record_hook(std::function<void(const market::EpisodeRecord&)> hook) { hook_ = std::move(hook); }

  /// Trains up to `n` more episodes (stops at the configured horizon).
  void train(std::int64_t n) {
    const std::int64_t stop = std::min(cfg_.episodes, env_.episode() + n);
    while (env_.episode() < stop) {
      train_episode();
      const std::int64_t done_eps = env_.episode();
      if (done_eps % cfg_.evaluation_interval == 0) {
        const auto sum = evaluate(std::min<std::int64_t>(cfg_.eval_episodes, 100), 0);
        snapshots_.push_back({done_eps, sum.mean_reward, sum.mean_profit, sum.cvar95});
      }
    }
  }

  void train_to_end() { train(cfg_.episodes - env_.episode()); }

  /// Deterministic-policy rollout on a fresh environment seeded by
  /// evaluation_seed(run seed, index). Training state is untouched.
  EvalSummary evaluate(std::int64_t episodes, std::uint64_t index,
                       std::optional<market::StressRegime> stress = std::nullopt,
                       std::vector<market::EpisodeRecord>* records_out = nullptr) const {
    return evaluate_with_seed(episodes, evaluation_seed(cfg_.seed, index), std::move(stress), records_out);
  }

  EvalSummary evaluate_with_seed(std::int64_t episodes, std::uint64_t env_seed,
                                 std::optional<market::StressRegime> stress = std::nullopt,
                                 std::vector<market::EpisodeRecord>* records_out = nullptr) const {
    market::EnvironmentConfig ec = cfg_.environment;
    ec.horizon = episodes;
    ec.stress = stress ? *stress : market::StressRegime{};
    market::MarketEnvironment env(ec, env_seed);
    std::vector<Engine> rngs;
    for (int i = 0; i < cfg_.n_agents(); ++i) {
      rngs.push_back(substream(env_seed, "eval_policy", static_cast<std::uint64_t>(i)));
    }
    std::vector<market::EpisodeRecord> records;
    records.reserve(static_cast<std::size_t>(episodes));
    for (std::int64_t e = 0; e < episodes; ++e) {
      const auto obs = env.observe_all();
      std::vector<market::Bid> bids;
      for (int i = 0; i < cfg_.n_agents(); ++i) {
        bids.push_back(eval_bid(env, i, obs[static_cast<std::size_t>(i)], rngs[static_cast<std::size_t>(i)]));
      }
      records.push_back(env.step(std::move(bids)));
    }
    auto sum = summarize(records, cfg_.n_agents(), cfg_.environment.market.n_lines, cfg_.environment.reward.alpha);
    if (records_out) *records_out = std::move(records);
    return sum;
  }

  learn::Checkpoint checkpoint() const {
    learn::Checkpoint c;
    const int n = cfg_.n_agents();
    for (int i = 0; i < n; ++i) c.agents.push_back({i, "reinsurer", to_string(cfg_.algorithm.algorithm)});
    for (std::size_t i = 0; i < policies_.size(); ++i) {
      const auto& pi = policies_[i];
      const std::string p = "actor_" + std::to_string(i);
      c.add_network(p, pi.actor, &pi.actor_opt);
      c.vectors.emplace_back(p + ".log_std", pi.log_std);
      c.vectors.emplace_back(p + ".log_std.m", pi.log_std_opt.first_moment);
      c.vectors.emplace_back(p + ".log_std.v", pi.log_std_opt.second_moment);
      c.counters.emplace_back(p + ".log_std.step", static_cast<std::int64_t>(pi.log_std_opt.step_count));
    }
    for (std::size_t k = 0; k < critics_.nets.size(); ++k) {
      const std::string p = "critic_" + std::to_string(k);
      c.add_network(p, critics_.nets[k], &critics_.opts[k]);
      const auto& nm = critics_.norms[k];
      c.vectors.emplace_back(p + ".value_norm", std::vector<double>{nm.mean, nm.var, nm.count});
    }
    for (std::size_t i = 0; i < q_.size(); ++i) {
      const std::string p = "q_" + std::to_string(i);
      c.add_network(p, q_[i].q_net, &q_[i].opt);
      c.add_network(p + ".target", q_[i].target_q_net);
      c.vectors.emplace_back(p + ".ou", q_[i].ou.state);
      c.vectors.emplace_back(p + ".epsilon", std::vector<double>{q_[i].epsilon});
      c.counters.emplace_back(p + ".updates", static_cast<std::int64_t>(q_[i].updates));
    }
    c.counters.emplace_back("episode", env_.episode());
    c.rng_states.emplace_back("update", save_engine(update_rng_));
    for (std::size_t i = 0; i < policy_rng_.size(); ++i) {
      c.rng_states.emplace_back("policy_" + std::to_string(i), save_engine(policy_rng_[i]));
    }
    std::ostringstream blob;
    io::BinaryWriter w(blob);
    env_.save(w);
    save_rollout(w);
    save_replay(w);
    c.blob = blob.str();
    return c;
  }

  void restore(const learn::Checkpoint& c) {
    if (c.agents.size() != static_cast<std::size_t>(cfg_.n_agents())) {
      throw FormatError("checkpoint: agent count differs from configuration");
    }
    for (const auto& a : c.agents) {
      if (a.algorithm != to_string(cfg_.algorithm.algorithm)) {
        throw FormatError("checkpoint: algorithm '" + a.algorithm + "' differs from configuration");
      }
    }
    for (std::size_t i = 0; i < policies_.size(); ++i) {
      auto& pi = policies_[i];
      const std::string p = "actor_" + std::to_string(i);
      c.restore_network(p, pi.actor, &pi.actor_opt);
      pi.log_std = c.vector(p + ".log_std");
      pi.log_std_opt.first_moment = c.vector(p + ".log_std.m");
      pi.log_std_opt.second_moment = c.vector(p + ".log_std.v");
      pi.log_std_opt.step_count = static_cast<std::uint64_t>(c.counter(p + ".log_std.step"));
    }
    for (std::size_t k = 0; k < critics_.nets.size(); ++k) {
      const std::string p = "critic_" + std::to_string(k);
      c.restore_network(p, critics_.nets[k], &critics_.opts[k]);
      const auto& v = c.vector(p + ".value_norm");
      if (v.size() != 3) throw FormatError("checkpoint: malformed value normalizer");
      critics_.norms[k] = {v[0], v[1], v[2]};
    }
    for (std::size_t i = 0; i < q_.size(); ++i) {
      const std::string p = "q_" + std::to_string(i);
      c.restore_network(p, q_[i].q_net, &q_[i].opt);
      c.restore_network(p + ".target", q_[i].target_q_net);
      q_[i].ou.state = c.vector(p + ".ou");
      q_[i].epsilon = c.vector(p + ".epsilon").at(0);
      q_[i].updates = static_cast<std::uint64_t>(c.counter(p + ".updates"));
    }
    c.restore_rng("update", update_rng_);
    for (std::size_t i = 0; i < policy_rng_.size(); ++i) c.restore_rng("policy_" + std::to_string(i), policy_rng_[i]);
    std::istringstream blob(c.blob);
    io::BinaryReader r(blob);
    env_.load(r);
    load_rollout(r);
    load_replay(r);
    if (env_.episode() != c.counter("episode")) throw FormatError("checkpoint: episode counter mismatch");
  }

 private:
  market::Bid eval_bid(market::MarketEnvironment& env, int i, const market::Observation& obs, Engine& rng) const {
    const auto& t = env.offer();
    const auto& box = cfg_.environment.box;
    switch (cfg_.algorithm.algorithm) {
      case Algorithm::mappo:
      case Algorithm::mappo_local: {
        const auto r = agents::act(policies_[static_cast<std::size_t>(i)], obs.values, rng, agents::ActMode::deterministic);
        return market::Bid::from_unit(i, t.treaty_kind, agents::to_array3(r.action), box);
      }
      case Algorithm::q_learning: {
        const auto& q = q_[static_cast<std::size_t>(i)];
        const auto k = agents::argmax_index(q.q_net.forward(obs.values));
        return market::Bid::from_unit(i, t.treaty_kind, q.grid_point(k), box);
      }
      case Algorithm::random:
        return market::Bid::from_unit(i, t.treaty_kind, agents::random_unit_action(rng), box);
      case Algorithm::actuarial:
        return agents::actuarial_bid(t, cfg_.algorithm.actuarial, env.pricing(), box);
    }
    throw ContractViolation("eval_bid: unknown algorithm");
  }

  void train_episode() {
    const int n = cfg_.n_agents();
    const auto& box = cfg_.environment.box;
    const auto& t = env_.offer();
    const auto obs = env_.observe_all();
    const Algorithm alg = cfg_.algorithm.algorithm;
    const bool ppo = alg == Algorithm::mappo || alg == Algorithm::mappo_local;
    std::vector<double> gs;
    if (ppo) gs = agents::global_state(obs, env_.treaty_features(), cfg_.environment);

    std::vector<market::Bid> bids;
    std::vector<agents::ActResult> acts(static_cast<std::size_t>(n));
    std::vector<double> values(static_cast<std::size_t>(n), 0.0);
    std::vector<std::size_t> q_actions(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      Engine& rng = policy_rng_[ui];
      switch (alg) {
        case Algorithm::mappo:
        case Algorithm::mappo_local:
          acts[ui] = agents::act(policies_[ui], obs[ui].values, rng, agents::ActMode::stochastic);
          values[ui] = critics_.value(ui, obs[ui].values, gs);
          bids.push_back(market::Bid::from_unit(i, t.treaty_kind, agents::to_array3(acts[ui].action), box));
          break;
        case Algorithm::q_learning: {
          auto& q = q_[ui];
          q.set_epsilon_for_episode(env_.episode());
          const auto qa = agents::q_baseline_act(q, obs[ui].values, rng);
          q_actions[ui] = qa.index;
          bids.push_back(market::Bid::from_unit(i, t.treaty_kind, agents::q_explore(q, qa, rng), box));
          break;
        }
        case Algorithm::random:
          bids.push_back(market::Bid::from_unit(i, t.treaty_kind, agents::random_unit_action(rng), box));
          break;
        case Algorithm::actuarial:
          bids.push_back(agents::actuarial_bid(t, cfg_.algorithm.actuarial, env_.pricing(), box));
          break;
      }
    }

    const auto rec = env_.step(std::move(bids));
    if (hook_) hook_(rec);
    const auto rows = metrics_rows(rec, env_.portfolios());
    metrics_.insert(metrics_.end(), rows.begin(), rows.end());

    if (ppo) {
      for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto& s = rec.agents[ui];
        buffer_.add(ui, {obs[ui].values, gs, acts[ui].raw, acts[ui].log_prob, s.reward, values[ui], s.done});
      }
      const bool done = rec.agents.front().done;
      if (buffer_.full() || done) {
        if (!done) {
          std::vector<market::Observation> next;
          for (const auto& s : rec.agents) next.push_back(s.next_observation);
          const auto next_gs = agents::global_state(next, env_.treaty_features(), cfg_.environment);
          for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            buffer_.last_values[ui] = critics_.value(ui, next[ui].values, next_gs);
          }
        }
        agents::compute_advantages(buffer_, cfg_.algorithm.ppo.gamma, cfg_.algorithm.ppo.gae_lambda);
        updates_.push_back(agents::mappo_update(policies_, critics_, buffer_, cfg_.algorithm.ppo, update_rng_));
      }
    } else if (alg == Algorithm::q_learning) {
      for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto& s = rec.agents[ui];
        auto& q = q_[ui];
        q.replay.add({obs[ui].values, q_actions[ui], s.reward, s.next_observation.values, s.done});
        for (std::size_t k = 0; k < q.cfg.updates_per_step; ++k) agents::q_baseline_train_step(q, update_rng_);
      }
    }
  }

  void save_rollout(io::BinaryWriter& w) const {
    w.u64(buffer_.steps.size());
    for (std::size_t i = 0; i < buffer_.steps.size(); ++i) {
      w.f64(buffer_.last_values[i]);
      w.u64(buffer_.steps[i].size());
      for (const auto& t : buffer_.steps[i]) {
        w.f64s(t.obs);
        w.f64s(t.global_state);
        w.f64s(t.raw_action);
        w.f64(t.log_prob);
        w.f64(t.reward);
        w.f64(t.value);
        w.boolean(t.done);
      }
    }
  }

  void load_rollout(io::BinaryReader& r) {
    const auto n = r.u64();
    if (n != buffer_.steps.size()) throw FormatError("checkpoint: rollout agent count mismatch");
    buffer_.advantages.clear();
    buffer_.returns.clear();
    for (std::size_t i = 0; i < n; ++i) {
      buffer_.last_values[i] = r.f64();
      buffer_.steps[i].clear();
      const auto m = r.u64();
      for (std::uint64_t k = 0; k < m; ++k) {
        agents::Transition t;
        t.obs = r.f64s();
        t.global_state = r.f64s();
        t.raw_action = r.f64s();
        t.log_prob = r.f64();
        t.reward = r.f64();
        t.value = r.f64();
        t.done = r.boolean();
        buffer_.steps[i].push_back(std::move(t));
      }
    }
  }

  void save_replay(io::BinaryWriter& w) const {
    w.u64(q_.size());
    for (const auto& q : q_) {
      w.u64(q.replay.next);
      w.u64(q.replay.items.size());
      for (const auto& t : q.replay.items) {
        w.f64s(t.obs);
        w.u64(t.action);
        w.f64(t.reward);
        w.f64s(t.next_obs);
        w.boolean(t.done);
      }
    }
  }

  void load_replay(io::BinaryReader& r) {
    const auto n = r.u64();
    if (n != q_.size()) throw FormatError("checkpoint: replay agent count mismatch");
    for (auto& q : q_) {
      q.replay.next = r.u64();
      q.replay.items.clear();
      const auto m = r.u64();
      for (std::uint64_t k = 0; k < m; ++k) {
        agents::QTransition t;
        t.obs = r.f64s();
        t.action = r.u64();
        t.reward = r.f64();
        t.next_obs = r.f64s();
        t.done = r.boolean();
        q.replay.items.push_back(std::move(t));
      }
    }
  }

  RunConfig cfg_;
  market::MarketEnvironment env_;
  Engine update_rng_;
  std::vector<Engine> policy_rng_;
  std::vector<agents::GaussianPolicy> policies_;
  agents::Critics critics_;
  agents::RolloutBuffer buffer_;
  std::vector<agents::QBaselineState> q_;
  std::vector<EpisodeMetrics> metrics_;
  std::vector<EvaluationSnapshot> snapshots_;
  std::vector<agents::UpdateStats> updates_;
  std::function<void(const market::EpisodeRecord&)> hook_;
};

}  // namespace treatybid::experiments
