#pragma once

// Adam, gradient clipping, Ornstein-Uhlenbeck noise, tanh squashing and the
// finite-difference gradient check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/learn/dense.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::learn {

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {}

  void validate() const {
    require(learning_rate > 0.0, "adam: learning_rate must be > 0");
    require(beta1 > 0.0 && beta1 < 1.0, "adam: beta1 must lie in (0,1)");
    require(beta2 > 0.0 && beta2 < 1.0, "adam: beta2 must lie in (0,1)");
    require(epsilon > 0.0, "adam: epsilon must be > 0");
  }
};

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
  if (params.size() != grads.size() || params.size() != s.first_moment.size() ||
      params.size() != s.second_moment.size()) {
    throw ContractViolation("adam_step: shape mismatch");
  }
  s.step_count += 1;
  const double t = static_cast<double>(s.step_count);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * g;
    s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.first_moment[i] / c1;
    const double v_hat = s.second_moment[i] / c2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

/// Rescales `grads` in place to L2 norm at most `max_norm`; returns the
/// original norm.
inline double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

struct OUProcess {
  double theta = 0.15;
  double sigma = 0.2;
  double dt = 1.0;
  std::vector<double> state;

  OUProcess() = default;
  OUProcess(std::size_t dim, double theta_ou, double sigma_ou, double dt_ou = 1.0)
      : theta(theta_ou), sigma(sigma_ou), dt(dt_ou), state(dim, 0.0) {
    require(theta > 0.0, "ou: theta must be > 0");
    require(sigma >= 0.0, "ou: sigma must be >= 0");
    require(dt > 0.0, "ou: dt must be > 0");
  }

  void reset() { std::fill(state.begin(), state.end(), 0.0); }
};

/// Euler step x <- x - theta x dt + sigma sqrt(dt) z; returns the new state.
inline const std::vector<double>& ou_sample(OUProcess& p, Engine& eng) {
  const double sq = std::sqrt(p.dt);
  for (double& x : p.state) {
    const double z = standard_normal(eng);
    x += p.theta * (0.0 - x) * p.dt + p.sigma * sq * z;
  }
  return p.state;
}

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

inline void check_bounds(std::span<const Bounds> box) {
  for (const auto& b : box) {
    if (!(b.lo < b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) {
      throw ContractViolation("squash: invalid box (need lo < hi)");
    }
  }
}

/// lo + (hi - lo) (tanh(raw) + 1) / 2, nudged strictly inside the box.
inline std::vector<double> squash_action(std::span<const double> raw, std::span<const Bounds> box) {
  if (raw.size() != box.size()) throw ContractViolation("squash: dimension mismatch");
  check_bounds(box);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double u = 0.5 * (std::tanh(raw[i]) + 1.0);
    double y = box[i].lo + (box[i].hi - box[i].lo) * u;
    // tanh saturates to +-1 in double precision for |raw| > ~19.
    if (!(y > box[i].lo)) y = std::nextafter(box[i].lo, box[i].hi);
    if (!(y < box[i].hi)) y = std::nextafter(box[i].hi, box[i].lo);
    out[i] = y;
  }
  return out;
}

/// Inverse of squash_action for points strictly inside the box.
inline std::vector<double> unsquash_action(std::span<const double> y, std::span<const Bounds> box) {
  if (y.size() != box.size()) throw ContractViolation("unsquash: dimension mismatch");
  check_bounds(box);
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = (y[i] - box[i].lo) / (box[i].hi - box[i].lo);
    if (!(u > 0.0 && u < 1.0)) throw ContractViolation("unsquash: point not strictly inside the box");
    out[i] = std::atanh(2.0 * u - 1.0);
  }
  return out;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  /// Set when some perturbation crossed a ReLU kink.
  bool kink = false;
};

namespace detail {
inline std::vector<bool> relu_mask(const DenseNet& net, std::span<const double> x) {
  DenseNet::Cache c;
  net.forward(x, &c);
  std::vector<bool> mask;
  for (std::size_t l = 0; l + 1 < net.layers(); ++l) {
    for (double z : c.pre[l]) mask.push_back(z > 0.0);
  }
  return mask;
}

inline bool has_zero_preactivation(const DenseNet& net, std::span<const double> x) {
  DenseNet::Cache c;
  net.forward(x, &c);
  for (std::size_t l = 0; l + 1 < net.layers(); ++l) {
    for (double z : c.pre[l]) {
      if (z == 0.0) return true;
    }
  }
  return false;
}
}  // namespace detail

/// Compares backward() against central differences of the scalar sum of
/// outputs. Parameters whose perturbation flips any ReLU are skipped and
/// the result is flagged.
inline GradCheckResult finite_diff_check(const DenseNet& net, std::span<const double> input, double h) {
  if (!(h > 0.0)) throw ContractViolation("finite_diff_check: h must be > 0");
  GradCheckResult res;
  DenseNet work = net;
  DenseNet::Cache cache;
  work.forward(input, &cache);
  std::vector<double> ones(work.output_dim(), 1.0);
  std::vector<double> grad(work.num_params(), 0.0);
  work.backward(cache, ones, grad);

  if (detail::has_zero_preactivation(work, input)) res.kink = true;
  const std::vector<bool> base_mask = detail::relu_mask(work, input);
  auto total = [&](const DenseNet& n) {
    const auto out = n.forward(input);
    double s = 0.0;
    for (double v : out) s += v;
    return s;
  };
  for (std::size_t k = 0; k < work.num_params(); ++k) {
    const double orig = work.params()[k];
    work.mutable_params()[k] = orig + h;
    const double fp = total(work);
    const bool flip_p = detail::relu_mask(work, input) != base_mask;
    work.mutable_params()[k] = orig - h;
    const double fm = total(work);
    const bool flip_m = detail::relu_mask(work, input) != base_mask;
    work.mutable_params()[k] = orig;
    if (flip_p || flip_m) {
      res.kink = true;
      ++res.skipped;
      continue;
    }
    const double cd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(grad[k]), std::abs(cd), 1e-8});
    res.max_relative_error = std::max(res.max_relative_error, std::abs(grad[k] - cd) / denom);
    ++res.checked;
  }
  return res;
}

}  // namespace treatybid::learn
