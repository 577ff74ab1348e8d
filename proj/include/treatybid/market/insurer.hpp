#pragma once

// Insurer-side bid evaluation: stochastic utility scoring, the incumbent
// tolerance rule, and the incumbent's last-look revision.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/market/bid.hpp"
#include "treatybid/market/treaty.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::market {

struct InsurerPreferences {
  double theta = 0.15;
  double sigma_noise = 0.02;
  double delta_incumbent = 0.05;
  bool last_look_enabled = true;
  double lambda_insurer = 0.0;
  /// Participation constraint: a bid is declined when its premium exceeds
  /// (1 + max_loading) times its expected claim. Negative disables it.
  double max_loading = 2.0;
  /// Added after shifting utilities non-negative for the tolerance rule.
  double shift_epsilon = 1e-6;
  /// Fractional premium cut the incumbent offers on a last look.
  double last_look_discount = 0.1;

  void validate() const {
    require(theta >= 0.0, "insurer: theta must be >= 0");
    require(sigma_noise >= 0.0, "insurer: sigma_noise must be >= 0");
    require(delta_incumbent >= 0.0 && delta_incumbent < 1.0,
            "insurer: delta_incumbent must lie in [0,1)");
    require(lambda_insurer >= 0.0, "insurer: lambda_insurer must be >= 0");
    require(shift_epsilon >= 0.0, "insurer: shift_epsilon must be >= 0");
    require(last_look_discount >= 0.0 && last_look_discount < 1.0,
            "insurer: last_look_discount must lie in [0,1)");
  }

  /// Weight on the primary generosity term (limit or quota). Rises from 1/2
  /// toward 1 as the insurer becomes more risk averse.
  double generosity_weight() const {
    return (1.0 + 2.0 * lambda_insurer) / (2.0 + 2.0 * lambda_insurer);
  }
};

inline double coverage_quality(const TreatySpec& t, const Bid& b, const InsurerPreferences& prefs,
                               const ActionBox& box) {
  const double w = prefs.generosity_weight();
  if (t.treaty_kind == TreatyKind::excess_of_loss) {
    const auto lf = box.limit_factor();
    const auto ao = box.attachment_offset();
    const double limit_norm = std::clamp((b.limit_factor - lf.lo) / lf.width(), 0.0, 1.0);
    const double attach_norm = std::clamp((b.attachment_offset - ao.lo) / ao.width(), 0.0, 1.0);
    return w * limit_norm + (1.0 - w) * (1.0 - attach_norm);
  }
  const double comm_norm = std::clamp(b.ceding_commission / box.commission_max, 0.0, 1.0);
  return w * std::clamp(b.quota, 0.0, 1.0) + (1.0 - w) * (1.0 - comm_norm);
}

/// Noise-free part of the insurer's utility; premium enters as a rate.
inline double deterministic_utility(const TreatySpec& t, const Bid& b,
                                    const InsurerPreferences& prefs, const ActionBox& box) {
  return -b.premium_rate + prefs.theta * coverage_quality(t, b, prefs, box);
}

/// Always consumes one normal draw, even when sigma_noise is zero.
inline double score_bid(const TreatySpec& t, const Bid& b, const InsurerPreferences& prefs,
                        const ActionBox& box, Engine& eng) {
  const double eps = standard_normal(eng);
  return deterministic_utility(t, b, prefs, box) + prefs.sigma_noise * eps;
}

struct ScoredBid {
  int agent = 0;
  double utility = 0.0;
};

struct Selection {
  std::optional<int> winner;
  int argmax = -1;
  bool incumbent_rule_used = false;
};

/// Plain argmax with ties going to the lowest agent index.
inline int argmax_lowest_index(std::span<const ScoredBid> scored) {
  int best = -1;
  double best_u = -std::numeric_limits<double>::infinity();
  for (const auto& s : scored) {
    if (best < 0 || s.utility > best_u || (s.utility == best_u && s.agent < best)) {
      best = s.agent;
      best_u = s.utility;
    }
  }
  return best;
}

/// Incumbent tolerance rule. The multiplicative threshold is applied to
/// utilities shifted by -min(0, min U) + shift_epsilon.
inline Selection select_winner(std::span<const ScoredBid> scored, std::optional<int> incumbent,
                               const InsurerPreferences& prefs) {
  if (scored.empty()) throw ContractViolation("select_winner: empty utility set");
  Selection sel;
  sel.argmax = argmax_lowest_index(scored);
  sel.winner = sel.argmax;
  if (!incumbent) return sel;
  const auto inc = std::find_if(scored.begin(), scored.end(),
                                [&](const ScoredBid& s) { return s.agent == *incumbent; });
  if (inc == scored.end()) return sel;

  double min_u = std::numeric_limits<double>::infinity();
  double max_u = -std::numeric_limits<double>::infinity();
  for (const auto& s : scored) {
    min_u = std::min(min_u, s.utility);
    max_u = std::max(max_u, s.utility);
  }
  const double shift = -std::min(0.0, min_u) + prefs.shift_epsilon;
  if (inc->utility + shift >= (1.0 - prefs.delta_incumbent) * (max_u + shift)) {
    sel.winner = inc->agent;
    sel.incumbent_rule_used = inc->agent != sel.argmax;
  }
  return sel;
}

struct PlacementOutcome {
  std::uint64_t treaty_id = 0;
  std::optional<int> winner;
  std::optional<int> incumbent;
  /// Per agent; empty for agents that did not enter selection.
  std::vector<std::optional<double>> utilities;
  /// Every submitted bid, as seen by the broker.
  std::vector<Bid> bids;
  bool last_look_used = false;
  bool incumbent_rule_used = false;
  std::optional<double> revised_utility;
  double premium_paid = 0.0;
  std::optional<Bid> bound_terms;

  std::vector<ScoredBid> scored() const {
    std::vector<ScoredBid> out;
    for (std::size_t i = 0; i < utilities.size(); ++i) {
      if (utilities[i]) out.push_back({static_cast<int>(i), *utilities[i]});
    }
    return out;
  }
};

/// Incumbent revises its losing bid. The revised utility reuses the
/// incumbent's original noise draw, so a revision identical to the original
/// bid can never win.
inline PlacementOutcome last_look(const PlacementOutcome& current, const Bid& revised,
                                  const TreatySpec& t, const InsurerPreferences& prefs,
                                  const ActionBox& box) {
  if (!prefs.last_look_enabled) throw ContractViolation("last_look: disabled by preferences");
  if (!current.incumbent) throw ContractViolation("last_look: no incumbent");
  const int j = *current.incumbent;
  if (j < 0 || static_cast<std::size_t>(j) >= current.utilities.size() || !current.utilities[j]) {
    throw ContractViolation("last_look: incumbent did not enter selection");
  }
  if (current.winner && *current.winner == j) {
    throw ContractViolation("last_look: incumbent already won");
  }
  const double noise = *current.utilities[j] - deterministic_utility(t, current.bids[j], prefs, box);
  const double revised_u = deterministic_utility(t, revised, prefs, box) + noise;

  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < current.utilities.size(); ++i) {
    if (static_cast<int>(i) != j && current.utilities[i]) {
      best_other = std::max(best_other, *current.utilities[i]);
    }
  }
  PlacementOutcome out = current;
  out.revised_utility = revised_u;
  if (revised_u >= best_other) {
    out.winner = j;
    out.last_look_used = true;
    out.incumbent_rule_used = false;
    out.bound_terms = revised;
    out.premium_paid = revised.premium(t);
  }
  return out;
}

/// Re-applies the selection rules to the stored utilities and checks that
/// they reproduce the stored winner.
inline bool verify_outcome(const PlacementOutcome& o, const InsurerPreferences& prefs) {
  const auto scored = o.scored();
  if (scored.empty()) return !o.winner;
  const Selection sel = select_winner(scored, o.incumbent, prefs);
  if (!o.last_look_used) {
    return sel.winner == o.winner && sel.incumbent_rule_used == o.incumbent_rule_used;
  }
  if (!o.incumbent || o.winner != o.incumbent || !o.revised_utility) return false;
  if (sel.winner == o.incumbent) return false;
  double best_other = -std::numeric_limits<double>::infinity();
  for (const auto& s : scored) {
    if (s.agent != *o.incumbent) best_other = std::max(best_other, s.utility);
  }
  return *o.revised_utility >= best_other;
}

}  // namespace treatybid::market
