#pragma once

// Scalar performance and risk measures.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "treatybid/error.hpp"

namespace treatybid::risk {

struct RewardWeights {
  double lambda_cvar = 0.1;
  double gamma_eff = 0.1;
  double alpha = 0.95;
  std::array<double, 3> efficiency_weights{0.4, 0.3, 0.3};

  void validate() const {
    require(lambda_cvar >= 0.0, "reward: lambda_cvar must be >= 0");
    require(gamma_eff >= 0.0, "reward: gamma_eff must be >= 0");
    require(alpha > 0.0 && alpha < 1.0, "reward: alpha must lie in (0,1)");
    for (double w : efficiency_weights) require(w >= 0.0, "reward: efficiency weights must be >= 0");
    const double sum = efficiency_weights[0] + efficiency_weights[1] + efficiency_weights[2];
    require(std::abs(sum - 1.0) <= 1e-12, "reward: efficiency weights must sum to 1");
  }
};

/// Number of tail samples averaged by cvar: ceil((1 - alpha) n), with a
/// small tolerance so that e.g. alpha = 0.95, n = 100 gives exactly 5.
inline std::size_t cvar_tail_count(std::size_t n, double alpha) {
  const double x = (1.0 - alpha) * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Empirical CVaR of a loss sample: mean of the worst ceil((1-alpha) n)
/// values. alpha = 0 gives the plain mean.
inline double cvar(std::span<const double> losses, double alpha) {
  if (losses.empty()) throw ContractViolation("cvar: empty sample");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractViolation("cvar: alpha must lie in [0,1)");
  std::vector<double> sorted(losses.begin(), losses.end());
  const std::size_t k = cvar_tail_count(sorted.size(), alpha);
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                    std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += sorted[i];
  return sum / static_cast<double>(k);
}

inline double reward(double profit, double cvar_estimate, double efficiency_score,
                     const RewardWeights& w) {
  return profit - w.lambda_cvar * cvar_estimate + w.gamma_eff * efficiency_score;
}

inline double efficiency(double win_rate, double inv_latency, double cost_score,
                         const std::array<double, 3>& weights) {
  const double sum = weights[0] + weights[1] + weights[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("efficiency: weights must sum to 1");
  return weights[0] * win_rate + weights[1] * inv_latency + weights[2] * cost_score;
}

inline double loss_ratio(double claims_paid, double premium_earned) {
  if (!(premium_earned > 0.0)) throw DegenerateError("loss_ratio: premium_earned must be > 0");
  return claims_paid / premium_earned;
}

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double population_std(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

/// Mean over population standard deviation, zero risk-free rate.
inline double sharpe(std::span<const double> profits) {
  if (profits.size() < 2) throw ContractViolation("sharpe: need at least 2 samples");
  const double sd = population_std(profits);
  if (!(sd > 0.0)) throw DegenerateError("sharpe: zero dispersion");
  return mean(profits) / sd;
}

/// One minus the Herfindahl index of premium shares by line.
inline double diversification(std::span<const double> premium_by_line) {
  const double total = std::accumulate(premium_by_line.begin(), premium_by_line.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateError("diversification: zero total premium");
  double hhi = 0.0;
  for (double p : premium_by_line) hhi += (p / total) * (p / total);
  return 1.0 - hhi;
}

struct RiskReturnPoint {
  double profit = 0.0;
  double cvar = 0.0;

  bool operator==(const RiskReturnPoint&) const = default;
};

inline bool dominates(const RiskReturnPoint& q, const RiskReturnPoint& p) {
  return q.profit >= p.profit && q.cvar <= p.cvar && (q.profit > p.profit || q.cvar < p.cvar);
}

/// Non-dominated (high profit, low CVaR) points sorted by CVaR ascending.
inline std::vector<RiskReturnPoint> pareto_frontier(std::span<const RiskReturnPoint> points) {
  std::vector<RiskReturnPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.cvar < b.cvar || (a.cvar == b.cvar && a.profit > b.profit);
  });
  // Sweep by increasing CVaR: a point survives iff its profit beats every
  // point with strictly smaller CVaR, and it is not beaten at equal CVaR.
  std::vector<RiskReturnPoint> out;
  double best_profit = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    const double group_best = sorted[i].profit;
    while (j < sorted.size() && sorted[j].cvar == sorted[i].cvar) ++j;
    if (group_best > best_profit) {
      for (std::size_t k = i; k < j && sorted[k].profit == group_best; ++k) out.push_back(sorted[k]);
      best_profit = group_best;
    }
    i = j;
  }
  return out;
}

}  // namespace treatybid::risk
