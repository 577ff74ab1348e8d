#pragma once

// Bids, the admissible action box, and treaty payout arithmetic.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <unordered_map>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/market/treaty.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::market {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  double clamp(double x) const { return std::clamp(x, lo, hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Number of numeric bid dimensions the policies act on. The meaning of
/// dimensions 1 and 2 depends on the treaty kind:
///   excess_of_loss: (premium_rate, attachment_offset, limit_factor)
///   quota_share:    (premium_rate, quota, ceding_commission)
inline constexpr std::size_t kActionDim = 3;

struct ActionBox {
  double rate_min = 0.0;
  double rate_max = 0.08;
  double commission_max = 0.3;
  double attachment_offset_max = 0.5;
  double limit_factor_min = 0.5;
  double limit_factor_max = 1.5;

  void validate() const {
    require(rate_min >= 0.0 && rate_min < rate_max, "action box: need 0 <= rate_min < rate_max");
    require(commission_max > 0.0, "action box: commission_max must be > 0");
    require(attachment_offset_max > 0.0 && attachment_offset_max < 1.0,
            "action box: attachment_offset_max must lie in (0,1)");
    require(limit_factor_min > 0.0 && limit_factor_min < limit_factor_max,
            "action box: need 0 < limit_factor_min < limit_factor_max");
    require(limit_factor_min <= 1.0 && limit_factor_max >= 1.0,
            "action box: limit factor range must contain 1");
  }

  Interval rate() const { return {rate_min, rate_max}; }
  Interval quota() const { return {0.0, 1.0}; }
  Interval commission() const { return {0.0, commission_max}; }
  Interval attachment_offset() const { return {-attachment_offset_max, attachment_offset_max}; }
  Interval limit_factor() const { return {limit_factor_min, limit_factor_max}; }

  std::array<Interval, kActionDim> dims(TreatyKind kind) const {
    if (kind == TreatyKind::excess_of_loss) return {rate(), attachment_offset(), limit_factor()};
    return {rate(), quota(), commission()};
  }
};

struct Bid {
  int agent_id = 0;
  double premium_rate = 0.0;
  double quota = 0.0;
  double ceding_commission = 0.0;
  double attachment_offset = 0.0;
  double limit_factor = 1.0;
  double submitted_at = 0.0;
  bool clamped = false;

  /// Builds a bid from the kind-specific action vector, clamping into the
  /// box and fixing the inert fields.
  static Bid from_action(int agent, TreatyKind kind, const std::array<double, kActionDim>& a,
                         const ActionBox& box) {
    Bid b;
    b.agent_id = agent;
    const auto dims = box.dims(kind);
    std::array<double, kActionDim> c{};
    for (std::size_t d = 0; d < kActionDim; ++d) {
      c[d] = dims[d].clamp(a[d]);
      if (c[d] != a[d] || !std::isfinite(a[d])) b.clamped = true;
      if (!std::isfinite(a[d])) c[d] = dims[d].lo;
    }
    b.premium_rate = c[0];
    if (kind == TreatyKind::excess_of_loss) {
      b.attachment_offset = c[1];
      b.limit_factor = c[2];
    } else {
      b.quota = c[1];
      b.ceding_commission = c[2];
    }
    return b;
  }

  /// Maps a point of the unit cube onto the kind-specific box.
  static Bid from_unit(int agent, TreatyKind kind, const std::array<double, kActionDim>& unit,
                       const ActionBox& box) {
    const auto dims = box.dims(kind);
    std::array<double, kActionDim> a{};
    for (std::size_t d = 0; d < kActionDim; ++d) a[d] = dims[d].lo + dims[d].width() * unit[d];
    return from_action(agent, kind, a, box);
  }

  std::array<double, kActionDim> action(TreatyKind kind) const {
    if (kind == TreatyKind::excess_of_loss) return {premium_rate, attachment_offset, limit_factor};
    return {premium_rate, quota, ceding_commission};
  }

  double premium(const TreatySpec& t) const { return premium_rate * t.exposure; }
  double effective_attachment(const TreatySpec& t) const {
    return t.attachment * (1.0 + attachment_offset);
  }
  double effective_limit(const TreatySpec& t) const { return t.limit * limit_factor; }

  /// Capital the reinsurer must hold to write this bid.
  double required_capacity(const TreatySpec& t) const {
    return t.treaty_kind == TreatyKind::excess_of_loss ? effective_limit(t) : quota * t.exposure;
  }
};

struct Payout {
  double reinsurer_claim = 0.0;
  double insurer_recovery = 0.0;
  double commission = 0.0;
};

inline double layer_claim(double total_loss, double attachment, double limit) {
  return std::min(limit, std::max(0.0, total_loss - attachment));
}

inline Payout coverage_payout(const TreatySpec& t, const Bid& b, const LossRealization& loss) {
  Payout p;
  const double total = loss.total();
  if (t.treaty_kind == TreatyKind::excess_of_loss) {
    p.reinsurer_claim = layer_claim(total, b.effective_attachment(t), b.effective_limit(t));
  } else {
    p.reinsurer_claim = b.quota * total;
    p.commission = b.ceding_commission * b.quota * b.premium(t);
  }
  p.insurer_recovery = p.reinsurer_claim;
  return p;
}

/// Layer expectation for one treaty archetype by conditional Monte Carlo:
/// attritional totals are sampled, and the catastrophe term is integrated
/// in closed form given each attritional draw. The engine is seeded from the
/// treaty's loss parameters, so the estimate is a pure function of the
/// treaty and never touches a run's random streams.
class LossSampleSet {
 public:
  LossSampleSet() = default;

  LossSampleSet(const TreatySpec& t, std::size_t samples)
      : cat_prob_(t.cat_prob), tail_(t.cat_tail_index), scale_(t.cat_scale) {
    Engine eng = substream(archetype_key(t), "pricing");
    attritional_.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      attritional_.push_back(sample_losses(t, eng).attritional_total);
    }
  }

  static std::uint64_t archetype_key(const TreatySpec& t) {
    std::uint64_t h = 0x51ed270b3a9c4f1dULL;
    auto mix = [&h](double v) {
      std::uint64_t bits = 0;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(v));
      h = splitmix64(h ^ bits);
    };
    mix(t.attritional_freq);
    mix(t.attritional_severity_mean);
    mix(t.attritional_severity_sigma);
    mix(t.cat_prob);
    mix(t.cat_tail_index);
    mix(t.cat_scale);
    return h;
  }

  std::size_t size() const { return attritional_.size(); }

  /// Estimate of E[min(limit, max(0, X - attachment))].
  double expected_layer(double attachment, double limit) const {
    if (attritional_.empty()) return 0.0;
    double sum = 0.0;
    for (double a : attritional_) {
      const double no_cat = layer_claim(a, attachment, limit);
      const double lo = attachment - a;
      const double with_cat = cat_survival_integral(lo + limit) - cat_survival_integral(lo);
      sum += (1.0 - cat_prob_) * no_cat + cat_prob_ * with_cat;
    }
    return sum / static_cast<double>(attritional_.size());
  }

 private:
  // Antiderivative of the Pareto survival function, extended by S = 1 below
  // the scale: J(u) = u for u <= s, s + s^a (u^(1-a) - s^(1-a)) / (1-a) above.
  double cat_survival_integral(double u) const {
    if (u <= scale_) return u;
    const double k = 1.0 - tail_;
    return scale_ + std::pow(scale_, tail_) * (std::pow(u, k) - std::pow(scale_, k)) / k;
  }

  std::vector<double> attritional_;
  double cat_prob_ = 0.0;
  double tail_ = 2.0;
  double scale_ = 1.0;
};

/// Expected reinsurer claim for a bid: closed form for quota share, Monte
/// Carlo layer average for excess of loss. Caches sample sets per archetype.
class PricingModel {
 public:
  explicit PricingModel(std::size_t samples = 100000, std::size_t max_cached = 64)
      : samples_(samples), max_cached_(max_cached) {}

  std::size_t samples() const { return samples_; }

  double expected_claim(const TreatySpec& t, const Bid& b) {
    if (t.treaty_kind == TreatyKind::quota_share) return b.quota * t.expected_total_loss();
    return sample_set(t).expected_layer(b.effective_attachment(t), b.effective_limit(t));
  }

  const LossSampleSet& sample_set(const TreatySpec& t) {
    const std::uint64_t key = LossSampleSet::archetype_key(t);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    if (cache_.size() >= max_cached_) cache_.clear();
    return cache_.emplace(key, LossSampleSet(t, samples_)).first->second;
  }

 private:
  std::size_t samples_;
  std::size_t max_cached_;
  std::unordered_map<std::uint64_t, LossSampleSet> cache_;
};

}  // namespace treatybid::market
