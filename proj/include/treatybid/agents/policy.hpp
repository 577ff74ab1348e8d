#pragma once

// Tanh-squashed diagonal Gaussian policy over the unit action cube.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/learn/dense.hpp"
#include "treatybid/learn/optim.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::agents {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;

enum class ActMode { stochastic, deterministic };

struct GaussianPolicy {
  learn::DenseNet actor;
  std::vector<double> log_std;
  std::vector<learn::Bounds> box;
  learn::AdamState actor_opt;
  learn::AdamState log_std_opt;

  GaussianPolicy() = default;

  /// Hidden layers from `hidden`; the output layer starts near zero so the
  /// initial mean action is the box midpoint.
  GaussianPolicy(std::size_t obs_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden,
                 double init_log_std, double lr, Engine& eng, std::vector<learn::Bounds> bounds = {})
      : log_std(action_dim, std::clamp(init_log_std, kLogStdMin, kLogStdMax)), box(std::move(bounds)) {
    std::vector<std::size_t> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(action_dim);
    actor = learn::DenseNet::initialized(sizes, eng);
    auto p = actor.mutable_params();
    const std::size_t last = actor.layers() - 1;
    for (std::size_t o = 0; o < action_dim; ++o) {
      for (std::size_t i = 0; i < sizes[last]; ++i) p[actor.weight_index(last, o, i)] *= 0.01;
    }
    if (box.empty()) box.assign(action_dim, learn::Bounds{0.0, 1.0});
    learn::check_bounds(box);
    if (box.size() != action_dim) throw ConfigError("policy: box dimension mismatch");
    actor_opt = learn::AdamState(actor.num_params(), lr);
    log_std_opt = learn::AdamState(action_dim, lr);
  }

  std::size_t obs_dim() const { return actor.input_dim(); }
  std::size_t action_dim() const { return log_std.size(); }

  void clamp_log_std() {
    for (double& s : log_std) s = std::clamp(s, kLogStdMin, kLogStdMax);
  }
};

struct ActResult {
  /// Squashed action inside the policy box.
  std::vector<double> action;
  /// Pre-squash Gaussian sample (the mean in deterministic mode).
  std::vector<double> raw;
  double log_prob = 0.0;
};

/// log(d squash / d raw) for one dimension of width `width`.
inline double squash_log_jacobian(double u, double width) {
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  const double x = -2.0 * u;
  const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return std::log(0.5 * width) + 2.0 * (std::numbers::ln2 - u - softplus);
}

inline double gaussian_log_density(double u, double mean, double log_sd) {
  const double z = (u - mean) * std::exp(-log_sd);
  return -0.5 * z * z - log_sd - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Log density of the squashed action, given its pre-squash value.
inline double squashed_log_prob(const GaussianPolicy& pi, std::span<const double> mean,
                                std::span<const double> raw) {
  double lp = 0.0;
  for (std::size_t d = 0; d < raw.size(); ++d) {
    lp += gaussian_log_density(raw[d], mean[d], pi.log_std[d]);
    lp -= squash_log_jacobian(raw[d], pi.box[d].hi - pi.box[d].lo);
  }
  return lp;
}

/// Reads only the policy, the observation and the engine.
inline ActResult act(const GaussianPolicy& pi, std::span<const double> obs, Engine& eng, ActMode mode) {
  if (obs.size() != pi.obs_dim()) throw ContractViolation("act: observation dimension mismatch");
  const std::vector<double> mean = pi.actor.forward(obs);
  ActResult r;
  r.raw.resize(mean.size());
  for (std::size_t d = 0; d < mean.size(); ++d) {
    r.raw[d] = mode == ActMode::deterministic ? mean[d]
                                               : mean[d] + std::exp(pi.log_std[d]) * standard_normal(eng);
  }
  r.action = learn::squash_action(r.raw, pi.box);
  r.log_prob = squashed_log_prob(pi, mean, r.raw);
  return r;
}

inline std::array<double, 3> to_array3(const std::vector<double>& v) {
  if (v.size() != 3) throw ContractViolation("expected a 3-dimensional action");
  return {v[0], v[1], v[2]};
}

}  // namespace treatybid::agents
