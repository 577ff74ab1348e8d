#pragma once

// Two-sample and one-sample tests with self-contained p-value evaluation
// (regularized incomplete beta for Student-t / F, Kolmogorov series for K-S).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/risk/metrics.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::risk {

namespace special {

/// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

/// Two-tailed p-value of a Student-t statistic.
inline double student_t_two_sided(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t)), 0.0, 1.0);
}

/// Upper tail P(F > f) of the F distribution.
inline double f_survival(double f, double d1, double d2) {
  if (std::isinf(f)) return 0.0;
  if (f <= 0.0) return 1.0;
  return std::clamp(incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f)), 0.0, 1.0);
}

/// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.18) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  double prev = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) <= 1e-16 * std::abs(sum) || std::abs(term) <= 1e-300) break;
    sign = -sign;
    prev = term;
  }
  (void)prev;
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace special

enum class TestMethod { welch_t, ks, paired_t, bootstrap, anova, ols_trend };

inline const char* to_string(TestMethod m) {
  switch (m) {
    case TestMethod::welch_t: return "welch_t";
    case TestMethod::ks: return "ks";
    case TestMethod::paired_t: return "paired_t";
    case TestMethod::bootstrap: return "bootstrap";
    case TestMethod::anova: return "anova";
    case TestMethod::ols_trend: return "ols_trend";
  }
  return "unknown";
}

struct StatReport {
  double statistic = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// Degrees of freedom (numerator dof for ANOVA).
  double dof = 0.0;
  double dof2 = 0.0;
  TestMethod method = TestMethod::welch_t;
  bool degenerate = false;
};

/// Welch's unequal-variance t-test with Welch-Satterthwaite dof.
inline StatReport welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ContractViolation("welch_t: each sample needs >= 2 values");
  StatReport r;
  r.method = TestMethod::welch_t;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  r.mean_difference = mean(a) - mean(b);
  const double se2 = va + vb;
  if (!(se2 > 0.0)) {
    r.degenerate = true;
    r.statistic = r.mean_difference == 0.0 ? 0.0 : std::copysign(INFINITY, r.mean_difference);
    r.p_value = r.mean_difference == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = r.mean_difference / std::sqrt(se2);
  r.dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = special::student_t_two_sided(r.statistic, r.dof);
  return r;
}

/// Two-sample Kolmogorov-Smirnov with the asymptotic p-value.
inline StatReport ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractViolation("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  StatReport r;
  r.method = TestMethod::ks;
  r.statistic = d;
  r.mean_difference = mean(a) - mean(b);
  const double en = std::sqrt(nx * ny / (nx + ny));
  r.p_value = special::kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
  return r;
}

/// One-sample t-test of paired differences against zero.
inline StatReport paired_t(std::span<const double> differences) {
  if (differences.size() < 2) throw ContractViolation("paired_t: need >= 2 differences");
  StatReport r;
  r.method = TestMethod::paired_t;
  const double n = static_cast<double>(differences.size());
  r.mean_difference = mean(differences);
  r.dof = n - 1.0;
  const double var = sample_variance(differences);
  if (!(var > 0.0)) {
    r.degenerate = true;
    r.statistic = r.mean_difference == 0.0 ? 0.0 : std::copysign(INFINITY, r.mean_difference);
    r.p_value = r.mean_difference == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = r.mean_difference / std::sqrt(var / n);
  r.p_value = special::student_t_two_sided(r.statistic, r.dof);
  return r;
}

inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap CI for mean(a) - mean(b). Equal-length samples are
/// resampled as pairs; otherwise each sample is resampled independently.
inline StatReport bootstrap_ci(std::span<const double> a, std::span<const double> b,
                               std::size_t resamples, double level, Engine& eng) {
  if (a.empty() || b.empty()) throw ContractViolation("bootstrap_ci: empty sample");
  if (resamples < 100) throw ContractViolation("bootstrap_ci: need >= 100 resamples");
  if (!(level > 0.0 && level < 1.0)) throw ContractViolation("bootstrap_ci: level must lie in (0,1)");
  const bool paired = a.size() == b.size();
  std::vector<double> stats;
  stats.reserve(resamples);
  auto draw = [&eng](std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform01(eng) * static_cast<double>(n)));
  };
  for (std::size_t r = 0; r < resamples; ++r) {
    double sa = 0.0;
    double sb = 0.0;
    if (paired) {
      for (std::size_t k = 0; k < a.size(); ++k) {
        const std::size_t idx = draw(a.size());
        sa += a[idx];
        sb += b[idx];
      }
    } else {
      for (std::size_t k = 0; k < a.size(); ++k) sa += a[draw(a.size())];
      for (std::size_t k = 0; k < b.size(); ++k) sb += b[draw(b.size())];
    }
    stats.push_back(sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size()));
  }
  std::sort(stats.begin(), stats.end());
  StatReport rep;
  rep.method = TestMethod::bootstrap;
  rep.mean_difference = mean(a) - mean(b);
  rep.statistic = rep.mean_difference;
  rep.ci_low = percentile_sorted(stats, 0.5 * (1.0 - level));
  rep.ci_high = percentile_sorted(stats, 1.0 - 0.5 * (1.0 - level));
  const auto below = static_cast<double>(
      std::count_if(stats.begin(), stats.end(), [](double s) { return s <= 0.0; }));
  const auto above = static_cast<double>(
      std::count_if(stats.begin(), stats.end(), [](double s) { return s >= 0.0; }));
  const double n = static_cast<double>(stats.size());
  rep.p_value = std::min(1.0, 2.0 * std::min(below, above) / n);
  return rep;
}

/// One-way ANOVA across groups. Fewer than two groups is flagged degenerate.
inline StatReport one_way_anova(const std::vector<std::vector<double>>& groups) {
  StatReport r;
  r.method = TestMethod::anova;
  std::size_t total_n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    total_n += g.size();
    for (double v : g) grand += v;
  }
  const double k = static_cast<double>(groups.size());
  const double n = static_cast<double>(total_n);
  if (groups.size() < 2 || total_n <= groups.size() ||
      std::any_of(groups.begin(), groups.end(), [](const auto& g) { return g.empty(); })) {
    r.degenerate = true;
    r.statistic = std::numeric_limits<double>::quiet_NaN();
    r.p_value = 1.0;
    return r;
  }
  grand /= n;
  double ssb = 0.0;
  double ssw = 0.0;
  for (const auto& g : groups) {
    const double m = mean(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }
  r.dof = k - 1.0;
  r.dof2 = n - k;
  const double msb = ssb / r.dof;
  const double msw = ssw / r.dof2;
  if (!(msw > 0.0)) {
    r.degenerate = true;
    r.statistic = msb > 0.0 ? INFINITY : 0.0;
    r.p_value = msb > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = msb / msw;
  r.p_value = special::f_survival(r.statistic, r.dof, r.dof2);
  return r;
}

/// Ordinary least squares of y on its index; statistic is the t of the
/// slope, mean_difference carries the slope itself.
inline StatReport ols_trend(std::span<const double> y) {
  StatReport r;
  r.method = TestMethod::ols_trend;
  const std::size_t n = y.size();
  if (n < 3) {
    r.degenerate = true;
    return r;
  }
  const double nd = static_cast<double>(n);
  const double xbar = 0.5 * (nd - 1.0);
  const double ybar = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxx += dx * dx;
    sxy += dx * (y[i] - ybar);
  }
  const double slope = sxy / sxx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = ybar + slope * (static_cast<double>(i) - xbar);
    sse += (y[i] - fit) * (y[i] - fit);
  }
  r.mean_difference = slope;
  r.dof = nd - 2.0;
  const double se = std::sqrt(sse / r.dof / sxx);
  if (!(se > 0.0)) {
    r.degenerate = true;
    r.statistic = slope == 0.0 ? 0.0 : std::copysign(INFINITY, slope);
    r.p_value = slope == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = slope / se;
  r.p_value = special::student_t_two_sided(r.statistic, r.dof);
  return r;
}

}  // namespace treatybid::risk
