#pragma once

// Non-learning baselines (actuarial, random) and the independent deep
// Q-learning baseline over a discretized action grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/learn/dense.hpp"
#include "treatybid/learn/optim.hpp"
#include "treatybid/market/bid.hpp"
#include "treatybid/market/treaty.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::agents {

struct ActuarialTerms {
  double loading = 0.3;
};

/// Expected claim times (1 + loading), as a rate of exposure, before clamping.
inline double actuarial_rate(double expected_claim, double loading, double exposure) {
  return expected_claim * (1.0 + loading) / exposure;
}

inline market::Bid actuarial_bid(const market::TreatySpec& t, const ActuarialTerms& terms,
                                 market::PricingModel& pricing, const market::ActionBox& box) {
  if (terms.loading < 0.0) throw ContractViolation("actuarial_bid: loading must be >= 0");
  std::array<double, market::kActionDim> a{};
  if (t.treaty_kind == market::TreatyKind::excess_of_loss) {
    a = {0.0, 0.0, 1.0};
  } else {
    // Neutral quota share: take the whole ceded share, no commission.
    a = {0.0, 1.0 - t.retention, 0.0};
  }
  market::Bid b = market::Bid::from_action(0, t.treaty_kind, a, box);
  const double e = pricing.expected_claim(t, b);
  a[0] = actuarial_rate(e, terms.loading, t.exposure);
  return market::Bid::from_action(0, t.treaty_kind, a, box);
}

/// Three uniforms per call regardless of treaty kind.
inline std::array<double, market::kActionDim> random_unit_action(Engine& eng) {
  std::array<double, market::kActionDim> u{};
  for (double& x : u) x = uniform01(eng);
  return u;
}

inline market::Bid random_bid(const market::ActionBox& box, market::TreatyKind kind, Engine& eng) {
  return market::Bid::from_unit(0, kind, random_unit_action(eng), box);
}

struct QConfig {
  std::size_t levels = 5;
  std::vector<std::size_t> hidden{64, 64};
  double lr = 1e-3;
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t replay_capacity = 1000000;
  std::size_t batch_size = 64;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_episodes = 1000;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  /// Scale of the OU perturbation added to the executed unit action.
  double ou_scale = 0.05;
  std::size_t updates_per_step = 1;

  void validate() const {
    require(levels >= 2, "q_learning: levels must be >= 2");
    require(lr > 0.0, "q_learning: lr must be > 0");
    require(gamma >= 0.0 && gamma <= 1.0, "q_learning: gamma must lie in [0,1]");
    require(tau > 0.0 && tau <= 1.0, "q_learning: tau must lie in (0,1]");
    require(replay_capacity >= 1, "q_learning: replay_capacity must be >= 1");
    require(batch_size >= 1, "q_learning: batch_size must be >= 1");
    require(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0,
            "q_learning: epsilon must lie in [0,1]");
    require(epsilon_decay_episodes >= 1, "q_learning: epsilon_decay_episodes must be >= 1");
    require(ou_scale >= 0.0, "q_learning: ou_scale must be >= 0");
  }
};

struct QTransition {
  std::vector<double> obs;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;
};

/// Uniform ring buffer.
struct ReplayBuffer {
  std::size_t capacity = 0;
  std::vector<QTransition> items;
  std::size_t next = 0;

  explicit ReplayBuffer(std::size_t cap = 0) : capacity(cap) {}

  std::size_t size() const { return items.size(); }

  void add(QTransition t) {
    if (capacity == 0) return;
    if (items.size() < capacity) {
      items.push_back(std::move(t));
    } else {
      items[next] = std::move(t);
    }
    next = (next + 1) % capacity;
  }

  std::vector<const QTransition*> sample(std::size_t n, Engine& eng) const {
    if (items.empty()) throw ContractViolation("replay: empty buffer");
    std::vector<const QTransition*> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto j = std::min(items.size() - 1,
                              static_cast<std::size_t>(uniform01(eng) * static_cast<double>(items.size())));
      out.push_back(&items[j]);
    }
    return out;
  }
};

/// The network maps an observation to one Q-value per grid action.
struct QBaselineState {
  QConfig cfg;
  learn::DenseNet q_net;
  learn::DenseNet target_q_net;
  learn::AdamState opt;
  ReplayBuffer replay;
  learn::OUProcess ou;
  double epsilon = 1.0;
  std::uint64_t updates = 0;

  QBaselineState() = default;
  QBaselineState(std::size_t obs_dim, const QConfig& c, Engine& eng)
      : cfg(c), replay(c.replay_capacity), ou(market::kActionDim, c.ou_theta, c.ou_sigma), epsilon(c.epsilon_start) {
    cfg.validate();
    std::vector<std::size_t> sizes{obs_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(action_count());
    q_net = learn::DenseNet::initialized(sizes, eng);
    target_q_net = q_net;
    opt = learn::AdamState(q_net.num_params(), cfg.lr);
  }

  std::size_t action_count() const {
    std::size_t n = 1;
    for (std::size_t d = 0; d < market::kActionDim; ++d) n *= cfg.levels;
    return n;
  }

  /// Grid point of action index k in the unit cube (first dimension slowest).
  std::array<double, market::kActionDim> grid_point(std::size_t k) const {
    std::array<double, market::kActionDim> u{};
    for (std::size_t d = market::kActionDim; d-- > 0;) {
      u[d] = static_cast<double>(k % cfg.levels) / static_cast<double>(cfg.levels - 1);
      k /= cfg.levels;
    }
    return u;
  }

  void set_epsilon_for_episode(std::int64_t episode) {
    const double frac = std::min(1.0, static_cast<double>(episode) / static_cast<double>(cfg.epsilon_decay_episodes));
    epsilon = cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
  }
};

struct QAction {
  std::size_t index = 0;
  std::array<double, market::kActionDim> unit{};
};

inline std::size_t argmax_index(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Epsilon-greedy over the grid. Draws one uniform for the exploration coin
/// and one for the random index on every call.
inline QAction q_baseline_act(const QBaselineState& s, std::span<const double> obs, Engine& eng) {
  const double coin = uniform01(eng);
  const double pick = uniform01(eng);
  QAction a;
  if (coin < s.epsilon) {
    a.index = std::min(s.action_count() - 1, static_cast<std::size_t>(pick * static_cast<double>(s.action_count())));
  } else {
    a.index = argmax_index(s.q_net.forward(obs));
  }
  a.unit = s.grid_point(a.index);
  return a;
}

/// Adds OU exploration to the executed action (training only).
inline std::array<double, market::kActionDim> q_explore(QBaselineState& s, const QAction& a, Engine& eng) {
  const auto& noise = learn::ou_sample(s.ou, eng);
  std::array<double, market::kActionDim> u = a.unit;
  for (std::size_t d = 0; d < u.size(); ++d) u[d] = std::clamp(u[d] + s.cfg.ou_scale * noise[d], 0.0, 1.0);
  return u;
}

inline void soft_update(learn::DenseNet& target, const learn::DenseNet& online, double tau) {
  auto t = target.mutable_params();
  const auto o = online.params();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
}

/// One gradient step on the squared Bellman residual against the target
/// network, then a soft target update. Returns the mean loss.
inline double q_baseline_update(QBaselineState& s, std::span<const QTransition* const> batch, double gamma) {
  if (batch.empty()) throw ContractViolation("q_baseline_update: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> g(s.q_net.num_params(), 0.0);
  double loss = 0.0;
  for (const QTransition* tr : batch) {
    double target = tr->reward;
    if (!tr->done && gamma > 0.0) {
      const auto next = s.target_q_net.forward(tr->next_obs);
      target += gamma * *std::max_element(next.begin(), next.end());
    }
    learn::DenseNet::Cache cache;
    const auto q = s.q_net.forward(tr->obs, &cache);
    const double err = q[tr->action] - target;
    loss += 0.5 * err * err * inv_b;
    std::vector<double> go(q.size(), 0.0);
    go[tr->action] = err * inv_b;
    s.q_net.backward(cache, go, g);
  }
  for (double x : g) {
    if (!std::isfinite(x)) throw NumericalError("q_baseline_update: non-finite gradient");
  }
  learn::adam_step(s.q_net.mutable_params(), g, s.opt);
  soft_update(s.target_q_net, s.q_net, s.cfg.tau);
  ++s.updates;
  return loss;
}

/// Samples a batch and updates; nullopt when replay is still too small.
inline std::optional<double> q_baseline_train_step(QBaselineState& s, Engine& eng) {
  if (s.replay.size() < s.cfg.batch_size) return std::nullopt;
  const auto batch = s.replay.sample(s.cfg.batch_size, eng);
  return q_baseline_update(s, batch, s.cfg.gamma);
}

}  // namespace treatybid::agents
