#pragma once

// Treaty offerings and the two-part loss model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "treatybid/error.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::market {

enum class TreatyKind { excess_of_loss, quota_share };

inline const char* to_string(TreatyKind k) {
  return k == TreatyKind::excess_of_loss ? "excess_of_loss" : "quota_share";
}

struct TreatySpec {
  std::uint64_t id = 0;
  TreatyKind treaty_kind = TreatyKind::excess_of_loss;
  double exposure = 1.0;
  int line = 0;
  double attachment = 0.0;
  double limit = 1.0;
  double retention = 0.0;
  double attritional_freq = 0.0;
  double attritional_severity_mean = 1.0;
  double attritional_severity_sigma = 0.5;
  double cat_prob = 0.0;
  double cat_tail_index = 2.0;
  double cat_scale = 1.0;

  void validate() const {
    require(exposure > 0.0, "treaty: exposure must be > 0");
    require(attachment >= 0.0, "treaty: attachment must be >= 0");
    require(limit > 0.0, "treaty: limit must be > 0");
    require(attachment < attachment + limit, "treaty: degenerate layer");
    require(retention >= 0.0 && retention <= 1.0, "treaty: retention must lie in [0,1]");
    require(attritional_freq >= 0.0, "treaty: attritional_freq must be >= 0");
    require(attritional_severity_mean > 0.0, "treaty: attritional_severity_mean must be > 0");
    require(attritional_severity_sigma > 0.0, "treaty: attritional_severity_sigma must be > 0");
    require(cat_prob >= 0.0 && cat_prob <= 1.0, "treaty: cat_prob must lie in [0,1]");
    require(cat_tail_index > 1.0, "treaty: cat_tail_index must be > 1 (finite mean)");
    require(cat_scale > 0.0, "treaty: cat_scale must be > 0");
  }

  double expected_attritional() const { return attritional_freq * attritional_severity_mean; }
  double expected_cat() const {
    return cat_prob * cat_tail_index * cat_scale / (cat_tail_index - 1.0);
  }
  double expected_total_loss() const { return expected_attritional() + expected_cat(); }
};

/// Closed interval used for uniform feature draws; lo == hi is a point mass.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double sample(Engine& eng) const { return uniform(eng, lo, hi); }
  double mid() const { return 0.5 * (lo + hi); }
  bool valid() const { return lo <= hi && std::isfinite(lo) && std::isfinite(hi); }
};

/// Distributions for treaty features. Fractions are relative to exposure.
struct MarketConfig {
  double exposure_mu = 4.6;
  double exposure_sigma = 0.25;
  int n_lines = 4;
  double quota_share_prob = 0.5;
  Range attachment{0.02, 0.08};
  Range limit{0.1, 0.5};
  Range retention{0.1, 0.5};
  Range attritional_freq{2.0, 6.0};
  Range attritional_severity_mean{0.005, 0.015};
  double attritional_severity_sigma = 0.8;
  Range cat_prob{0.01, 0.08};
  double cat_tail_index = 2.5;
  Range cat_scale{0.1, 0.3};

  double mean_exposure() const {
    return std::exp(exposure_mu + 0.5 * exposure_sigma * exposure_sigma);
  }

  void validate() const {
    require(std::isfinite(exposure_mu), "environment: exposure_mu must be finite");
    require(exposure_sigma >= 0.0, "environment: exposure_sigma must be >= 0");
    require(n_lines >= 1, "environment: n_lines must be >= 1");
    require(quota_share_prob >= 0.0 && quota_share_prob <= 1.0,
            "environment: quota_share_prob must lie in [0,1]");
    require(attachment.valid() && attachment.lo >= 0.0, "environment: attachment range invalid");
    require(limit.valid() && limit.lo > 0.0, "environment: limit range must be positive");
    require(retention.valid() && retention.lo >= 0.0 && retention.hi <= 1.0,
            "environment: retention range must lie in [0,1]");
    require(attritional_freq.valid() && attritional_freq.lo >= 0.0,
            "environment: attritional_freq range invalid");
    require(attritional_severity_mean.valid() && attritional_severity_mean.lo > 0.0,
            "environment: attritional_severity_mean range must be positive");
    require(attritional_severity_sigma > 0.0,
            "environment: attritional_severity_sigma must be > 0");
    require(cat_prob.valid() && cat_prob.lo >= 0.0 && cat_prob.hi <= 1.0,
            "environment: cat_prob range must lie in [0,1]");
    require(cat_tail_index > 1.0, "environment: cat_tail_index must be > 1 (finite mean)");
    require(cat_scale.valid() && cat_scale.lo > 0.0, "environment: cat_scale range must be positive");
  }
};

/// Draws one treaty. The number of engine draws is the same for every
/// configuration, so streams stay aligned across config variants.
inline TreatySpec generate_treaty(Engine& eng, const MarketConfig& cfg, std::uint64_t id) {
  TreatySpec t;
  t.id = id;
  const double z = standard_normal(eng);
  t.exposure = std::exp(cfg.exposure_mu + cfg.exposure_sigma * z);
  const double u_kind = uniform01(eng);
  t.treaty_kind = u_kind < cfg.quota_share_prob ? TreatyKind::quota_share : TreatyKind::excess_of_loss;
  const double u_line = uniform01(eng);
  t.line = std::min(cfg.n_lines - 1, static_cast<int>(u_line * cfg.n_lines));
  t.attachment = t.exposure * cfg.attachment.sample(eng);
  t.limit = t.exposure * cfg.limit.sample(eng);
  t.retention = cfg.retention.sample(eng);
  t.attritional_freq = cfg.attritional_freq.sample(eng);
  t.attritional_severity_mean = t.exposure * cfg.attritional_severity_mean.sample(eng);
  t.attritional_severity_sigma = cfg.attritional_severity_sigma;
  t.cat_prob = cfg.cat_prob.sample(eng);
  t.cat_tail_index = cfg.cat_tail_index;
  t.cat_scale = t.exposure * cfg.cat_scale.sample(eng);
  t.validate();
  return t;
}

struct LossRealization {
  double attritional_total = 0.0;
  double cat_total = 0.0;

  double total() const { return attritional_total + cat_total; }
};

/// Compound Poisson attritional losses plus a Bernoulli-occurrence Pareto
/// catastrophe. The catastrophe uniforms are always drawn so that stressed
/// and baseline runs consume the loss stream identically.
inline LossRealization sample_losses(const TreatySpec& t, Engine& eng) {
  LossRealization out;
  const std::uint64_t n = poisson(eng, t.attritional_freq);
  for (std::uint64_t k = 0; k < n; ++k) {
    out.attritional_total +=
        lognormal_by_mean(eng, t.attritional_severity_mean, t.attritional_severity_sigma);
  }
  const double u_occur = uniform01(eng);
  const double u_sev = uniform01(eng);
  if (u_occur < t.cat_prob) {
    out.cat_total = pareto_from_uniform(u_sev, t.cat_tail_index, t.cat_scale);
  }
  return out;
}

}  // namespace treatybid::market
