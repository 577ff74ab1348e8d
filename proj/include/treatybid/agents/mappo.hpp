#pragma once

// MAPPO: per-agent clipped-surrogate actors, a critic over global state
// (or per-agent local critics for the decentralized ablation), GAE.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "treatybid/agents/policy.hpp"
#include "treatybid/error.hpp"
#include "treatybid/learn/dense.hpp"
#include "treatybid/learn/optim.hpp"
#include "treatybid/market/environment.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::agents {

struct PPOConfig {
  double clip = 0.2;
  std::size_t epochs = 4;
  std::size_t minibatch = 1024;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  bool normalize_values = true;

  void validate() const {
    require(clip > 0.0 && clip < 1.0, "algorithm: clip must lie in (0,1)");
    require(epochs >= 1, "algorithm: epochs must be >= 1");
    require(minibatch >= 1, "algorithm: minibatch must be >= 1");
    require(gamma >= 0.0 && gamma <= 1.0, "algorithm: gamma must lie in [0,1]");
    require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "algorithm: gae_lambda must lie in [0,1]");
    require(entropy_coef >= 0.0, "algorithm: entropy_coef must be >= 0");
    require(max_grad_norm >= 0.0, "algorithm: max_grad_norm must be >= 0");
  }
};

struct Transition {
  std::vector<double> obs;
  std::vector<double> global_state;
  std::vector<double> raw_action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::size_t capacity = 0;
  std::vector<std::vector<Transition>> steps;
  /// Value of the state following each agent's last stored step.
  std::vector<double> last_values;
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t n_agents, std::size_t cap)
      : capacity(cap), steps(n_agents), last_values(n_agents, 0.0) {}

  std::size_t n_agents() const { return steps.size(); }
  std::size_t size() const { return steps.empty() ? 0 : steps.front().size(); }
  bool full() const { return size() >= capacity; }
  bool empty() const { return size() == 0; }

  void add(std::size_t agent, Transition t) {
    if (agent >= steps.size()) throw ContractViolation("rollout: agent index out of range");
    steps[agent].push_back(std::move(t));
  }

  void clear() {
    for (auto& s : steps) s.clear();
    advantages.clear();
    returns.clear();
    std::fill(last_values.begin(), last_values.end(), 0.0);
  }
};

/// Generalized advantage estimates (unnormalized) for one trajectory.
inline std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                       const std::vector<bool>& dones, double last_value, double gamma,
                                       double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ContractViolation("gae: length mismatch");
  std::vector<double> adv(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_v = t + 1 < n ? values[t + 1] : last_value;
    const double nonterminal = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_v * nonterminal - values[t];
    running = delta + gamma * lambda * nonterminal * running;
    adv[t] = running;
  }
  return adv;
}

/// Shifts to mean 0 and scales to unit std when std exceeds the guard.
inline void normalize_advantages(std::vector<double>& adv, double guard = 1e-8) {
  if (adv.empty()) return;
  const double m = risk::mean(adv);
  double ss = 0.0;
  for (double a : adv) ss += (a - m) * (a - m);
  const double sd = std::sqrt(ss / static_cast<double>(adv.size()));
  const double denom = sd > guard ? sd : 1.0;
  for (double& a : adv) a = (a - m) / denom;
}

/// Fills buffer.advantages (normalized per agent) and buffer.returns.
inline void compute_advantages(RolloutBuffer& buf, double gamma, double lambda, bool normalize = true) {
  if (buf.empty()) throw ContractViolation("compute_advantages: empty buffer");
  buf.advantages.assign(buf.n_agents(), {});
  buf.returns.assign(buf.n_agents(), {});
  for (std::size_t i = 0; i < buf.n_agents(); ++i) {
    const auto& s = buf.steps[i];
    std::vector<double> r, v;
    std::vector<bool> d;
    for (const auto& t : s) {
      r.push_back(t.reward);
      v.push_back(t.value);
      d.push_back(t.done);
    }
    std::vector<double> adv = compute_gae(r, v, d, buf.last_values[i], gamma, lambda);
    std::vector<double> ret(adv.size());
    for (std::size_t t = 0; t < adv.size(); ++t) ret[t] = adv[t] + v[t];
    if (normalize) normalize_advantages(adv);
    buf.advantages[i] = std::move(adv);
    buf.returns[i] = std::move(ret);
  }
}

/// Treaty features followed by every agent's observation in index order.
inline std::vector<double> global_state(const std::vector<market::Observation>& observations,
                                        const std::vector<double>& treaty_features,
                                        const market::EnvironmentConfig& cfg) {
  if (observations.size() != static_cast<std::size_t>(cfg.n_agents)) {
    throw ContractViolation("global_state: missing observation");
  }
  if (treaty_features.size() != cfg.treaty_dim()) throw ContractViolation("global_state: treaty feature dimension mismatch");
  std::vector<double> g = treaty_features;
  for (const auto& o : observations) {
    if (o.size() != cfg.observation_dim()) throw ContractViolation("global_state: observation dimension mismatch");
    g.insert(g.end(), o.values.begin(), o.values.end());
  }
  return g;
}

inline std::size_t global_state_dim(const market::EnvironmentConfig& cfg) {
  return cfg.treaty_dim() + static_cast<std::size_t>(cfg.n_agents) * cfg.observation_dim();
}

/// Running mean / variance of value targets (parallel-merge update).
struct RunningNorm {
  double mean = 0.0;
  double var = 1.0;
  double count = 1e-4;

  void update(std::span<const double> xs) {
    if (xs.empty()) return;
    const double bm = risk::mean(xs);
    double bv = 0.0;
    for (double x : xs) bv += (x - bm) * (x - bm);
    bv /= static_cast<double>(xs.size());
    const double bc = static_cast<double>(xs.size());
    const double delta = bm - mean;
    const double total = count + bc;
    mean += delta * bc / total;
    var = (var * count + bv * bc + delta * delta * count * bc / total) / total;
    count = total;
  }
  double sd() const { return std::sqrt(std::max(var, 1e-8)); }
  double normalize(double x) const { return (x - mean) / sd(); }
  double denormalize(double y) const { return y * sd() + mean; }
};

enum class CriticKind { central, local };

/// Central: one network over (global state, agent one-hot) -> value.
/// Local: one network per agent over its own observation -> value.
struct Critics {
  CriticKind kind = CriticKind::central;
  int n_agents = 0;
  std::vector<learn::DenseNet> nets;
  std::vector<learn::AdamState> opts;
  std::vector<RunningNorm> norms;
  bool normalize = true;

  Critics() = default;
  Critics(CriticKind k, int n, std::size_t obs_dim, std::size_t gs_dim, const std::vector<std::size_t>& hidden,
          double lr, Engine& eng, bool normalize_values = true)
      : kind(k), n_agents(n), normalize(normalize_values) {
    const std::size_t count = k == CriticKind::central ? 1 : static_cast<std::size_t>(n);
    const std::size_t in = k == CriticKind::central ? gs_dim + static_cast<std::size_t>(n) : obs_dim;
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    for (std::size_t c = 0; c < count; ++c) {
      nets.push_back(learn::DenseNet::initialized(sizes, eng));
      opts.emplace_back(nets.back().num_params(), lr);
      norms.emplace_back();
    }
  }

  std::size_t index(std::size_t agent) const { return kind == CriticKind::central ? 0 : agent; }

  std::vector<double> input(std::size_t agent, std::span<const double> obs, std::span<const double> gs) const {
    if (kind == CriticKind::local) return {obs.begin(), obs.end()};
    std::vector<double> x(gs.begin(), gs.end());
    for (int j = 0; j < n_agents; ++j) x.push_back(static_cast<std::size_t>(j) == agent ? 1.0 : 0.0);
    return x;
  }

  double value(std::size_t agent, std::span<const double> obs, std::span<const double> gs) const {
    const std::size_t c = index(agent);
    const double y = nets[c].forward(input(agent, obs, gs))[0];
    return normalize ? norms[c].denormalize(y) : y;
  }
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double actor_grad_norm = 0.0;
  double critic_grad_norm = 0.0;
};

/// Per-sample clipped surrogate min(r A, clip(r) A).
inline double clipped_objective(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

/// d(clipped objective)/d(log pi) for one sample: r A where the unclipped
/// branch is active, 0 where the clipped branch binds.
inline double clipped_objective_logp_grad(double ratio, double advantage, double clip) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage;
  return unclipped <= clipped ? unclipped : 0.0;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Engine& eng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(eng) * static_cast<double>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

namespace detail {
inline void ensure_finite(std::span<const double> v, const std::string& what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericalError("mappo_update: non-finite " + what);
  }
}
}  // namespace detail

/// One PPO update for every actor and the critic(s); clears the buffer.
inline UpdateStats mappo_update(std::vector<GaussianPolicy>& policies, Critics& critics, RolloutBuffer& buf,
                                const PPOConfig& cfg, Engine& eng) {
  if (buf.empty()) throw ContractViolation("mappo_update: empty buffer");
  if (buf.advantages.size() != buf.n_agents()) throw ContractViolation("mappo_update: advantages not computed");
  if (policies.size() != buf.n_agents()) throw ContractViolation("mappo_update: policy count mismatch");
  UpdateStats stats;
  std::size_t actor_batches = 0;
  std::size_t samples_seen = 0;

  // Critic targets, normalized with statistics that include this batch.
  struct CriticSample {
    std::vector<double> x;
    double target = 0.0;
  };
  std::vector<std::vector<CriticSample>> critic_data(critics.nets.size());
  {
    std::vector<std::vector<double>> rets(critics.nets.size());
    for (std::size_t i = 0; i < buf.n_agents(); ++i) {
      const std::size_t c = critics.index(i);
      rets[c].insert(rets[c].end(), buf.returns[i].begin(), buf.returns[i].end());
    }
    if (critics.normalize) {
      for (std::size_t c = 0; c < rets.size(); ++c) critics.norms[c].update(rets[c]);
    }
    for (std::size_t i = 0; i < buf.n_agents(); ++i) {
      const std::size_t c = critics.index(i);
      for (std::size_t t = 0; t < buf.steps[i].size(); ++t) {
        const auto& tr = buf.steps[i][t];
        const double ret = buf.returns[i][t];
        critic_data[c].push_back(
            {critics.input(i, tr.obs, tr.global_state), critics.normalize ? critics.norms[c].normalize(ret) : ret});
      }
    }
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < buf.n_agents(); ++i) {
      GaussianPolicy& pi = policies[i];
      const auto& steps = buf.steps[i];
      const auto order = shuffled_indices(steps.size(), eng);
      for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
        const std::size_t end = std::min(order.size(), start + cfg.minibatch);
        const double inv_b = 1.0 / static_cast<double>(end - start);
        std::vector<double> g_actor(pi.actor.num_params(), 0.0);
        std::vector<double> g_logstd(pi.action_dim(), 0.0);
        for (std::size_t k = start; k < end; ++k) {
          const auto& tr = steps[order[k]];
          const double adv = buf.advantages[i][order[k]];
          learn::DenseNet::Cache cache;
          const auto mean = pi.actor.forward(tr.obs, &cache);
          const double logp = squashed_log_prob(pi, mean, tr.raw_action);
          const double ratio = std::exp(logp - tr.log_prob);
          if (!std::isfinite(ratio)) {
            std::ostringstream msg;
            msg << "ratio (agent " << i << ", epoch " << epoch << ", logp " << logp << ", old " << tr.log_prob << ")";
            throw NumericalError("mappo_update: non-finite " + msg.str());
          }
          const double coef = clipped_objective_logp_grad(ratio, adv, cfg.clip);
          stats.policy_loss -= clipped_objective(ratio, adv, cfg.clip);
          stats.approx_kl += tr.log_prob - logp;
          if (std::abs(ratio - 1.0) > cfg.clip) stats.clip_fraction += 1.0;
          ++samples_seen;
          std::vector<double> g_mean(pi.action_dim());
          for (std::size_t d = 0; d < pi.action_dim(); ++d) {
            const double inv_var = std::exp(-2.0 * pi.log_std[d]);
            const double diff = tr.raw_action[d] - mean[d];
            g_mean[d] = -coef * inv_b * diff * inv_var;
            g_logstd[d] += -coef * inv_b * (diff * diff * inv_var - 1.0) - cfg.entropy_coef * inv_b;
          }
          pi.actor.backward(cache, g_mean, g_actor);
        }
        detail::ensure_finite(g_actor, "actor gradient (agent " + std::to_string(i) + ")");
        detail::ensure_finite(g_logstd, "log_std gradient (agent " + std::to_string(i) + ")");
        stats.actor_grad_norm += learn::clip_grad_norm(g_actor, cfg.max_grad_norm);
        learn::clip_grad_norm(g_logstd, cfg.max_grad_norm);
        learn::adam_step(pi.actor.mutable_params(), g_actor, pi.actor_opt);
        learn::adam_step(pi.log_std, g_logstd, pi.log_std_opt);
        pi.clamp_log_std();
        ++actor_batches;
      }
    }

    for (std::size_t c = 0; c < critics.nets.size(); ++c) {
      auto& net = critics.nets[c];
      const auto& data = critic_data[c];
      const auto order = shuffled_indices(data.size(), eng);
      const std::size_t mb = cfg.minibatch * (critics.kind == CriticKind::central ? buf.n_agents() : 1);
      for (std::size_t start = 0; start < order.size(); start += mb) {
        const std::size_t end = std::min(order.size(), start + mb);
        const double inv_b = 1.0 / static_cast<double>(end - start);
        std::vector<double> g(net.num_params(), 0.0);
        for (std::size_t k = start; k < end; ++k) {
          const auto& s = data[order[k]];
          learn::DenseNet::Cache cache;
          const double v = net.forward(s.x, &cache)[0];
          const double err = v - s.target;
          stats.value_loss += 0.5 * err * err;
          const double gv = err * inv_b;
          net.backward(cache, std::span<const double>(&gv, 1), g);
        }
        detail::ensure_finite(g, "critic gradient");
        stats.critic_grad_norm += learn::clip_grad_norm(g, cfg.max_grad_norm);
        learn::adam_step(net.mutable_params(), g, critics.opts[c]);
      }
    }
  }

  double ent = 0.0;
  for (const auto& pi : policies) {
    for (double s : pi.log_std) ent += s + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  }
  stats.entropy = ent / static_cast<double>(policies.size());
  if (samples_seen > 0) {
    const double n = static_cast<double>(samples_seen);
    stats.policy_loss /= n;
    stats.approx_kl /= n;
    stats.clip_fraction /= n;
  }
  if (actor_batches > 0) stats.actor_grad_norm /= static_cast<double>(actor_batches);
  if (!std::isfinite(stats.policy_loss) || !std::isfinite(stats.value_loss)) {
    throw NumericalError("mappo_update: non-finite loss");
  }
  buf.clear();
  return stats;
}

}  // namespace treatybid::agents
