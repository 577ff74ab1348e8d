#pragma once

// Episode state machine: treaty offer -> bids -> scoring and selection ->
// optional last look -> loss realization -> payouts -> portfolio and reward
// updates -> next treaty.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "treatybid/error.hpp"
#include "treatybid/io/binary.hpp"
#include "treatybid/market/bid.hpp"
#include "treatybid/market/insurer.hpp"
#include "treatybid/market/treaty.hpp"
#include "treatybid/risk/metrics.hpp"
#include "treatybid/rng.hpp"

namespace treatybid::market {

enum class StressKind { none, catastrophe, capacity };

inline const char* to_string(StressKind k) {
  switch (k) {
    case StressKind::none: return "none";
    case StressKind::catastrophe: return "catastrophe";
    case StressKind::capacity: return "capacity";
  }
  return "none";
}

inline StressKind parse_stress_kind(const std::string& s) {
  if (s == "none") return StressKind::none;
  if (s == "catastrophe") return StressKind::catastrophe;
  if (s == "capacity") return StressKind::capacity;
  throw ConfigError("stress: unknown regime '" + s + "'");
}

struct StressRegime {
  StressKind kind = StressKind::none;
  double cat_multiplier = 3.0;
  double capacity_factor = 0.7;
  /// Inclusive episode window; start < 0 means the whole run.
  std::int64_t start_episode = -1;
  std::int64_t end_episode = -1;

  void validate() const {
    require(cat_multiplier > 0.0, "stress: cat_multiplier must be > 0");
    require(capacity_factor > 0.0, "stress: capacity_factor must be > 0");
    if (start_episode >= 0) {
      require(end_episode >= start_episode, "stress: end_episode must be >= start_episode");
    }
  }

  bool whole_run() const { return start_episode < 0; }

  bool active(std::int64_t episode) const {
    if (kind == StressKind::none) return false;
    return whole_run() || (episode >= start_episode && episode <= end_episode);
  }
};

/// Catastrophe stress on one treaty: frequency saturates at 1.
inline TreatySpec stress_treaty(TreatySpec t, double cat_multiplier) {
  t.cat_prob = std::min(1.0, cat_multiplier * t.cat_prob);
  t.cat_scale = cat_multiplier * t.cat_scale;
  return t;
}

struct EnvironmentConfig {
  int n_agents = 3;
  /// Episodes in the run; normalizes the episode feature and marks done.
  std::int64_t horizon = 1500;
  MarketConfig market;
  InsurerPreferences insurer;
  ActionBox box;
  risk::RewardWeights reward;
  double initial_capital = 100.0;
  /// Capital must cover kappa times the bid's required capacity.
  double kappa = 1.0;
  /// Fraction of initial capital injected every episode.
  double replenish_rate = 0.02;
  double capital_floor = 0.01;
  /// Trailing window W for loss history and win rate.
  std::size_t window = 200;
  double latency_min_ms = 20.0;
  double latency_max_ms = 500.0;
  double latency_jitter = 0.25;
  double latency_scale_ms = 1000.0;
  std::size_t pricing_samples = 4000;
  StressRegime stress;

  void validate() const {
    require(n_agents >= 1, "environment: n_agents must be >= 1");
    require(horizon >= 0, "environment: horizon must be >= 0");
    market.validate();
    insurer.validate();
    box.validate();
    reward.validate();
    require(initial_capital > 0.0, "environment: initial_capital must be > 0");
    require(kappa >= 0.0, "environment: kappa must be >= 0");
    require(replenish_rate >= 0.0, "environment: replenish_rate must be >= 0");
    require(capital_floor > 0.0 && capital_floor < 1.0, "environment: capital_floor must lie in (0,1)");
    require(window >= 1, "environment: window must be >= 1");
    require(latency_min_ms >= 0.0 && latency_min_ms <= latency_max_ms,
            "environment: need 0 <= latency_min_ms <= latency_max_ms");
    require(latency_jitter >= 0.0 && latency_jitter < 1.0, "environment: latency_jitter must lie in [0,1)");
    require(latency_scale_ms > 0.0, "environment: latency_scale_ms must be > 0");
    require(pricing_samples >= 1, "environment: pricing_samples must be >= 1");
    stress.validate();
  }

  std::size_t treaty_dim() const { return 9 + static_cast<std::size_t>(market.n_lines); }
  std::size_t observation_dim() const { return treaty_dim() + 4 + 2; }
};

/// Expected claim under treaty-neutral terms (XoL: offset 0, limit factor 1;
/// quota share: per unit of quota) as a fraction of exposure.
inline double technical_rate(const TreatySpec& t, PricingModel& pricing) {
  if (t.treaty_kind == TreatyKind::quota_share) return t.expected_total_loss() / t.exposure;
  Bid neutral;
  return pricing.expected_claim(t, neutral) / t.exposure;
}

/// Normalized treaty features: exposure, line one-hot, attachment and limit
/// relative to exposure, retention, kind flag, three loss-model scalars and
/// the technical rate relative to the top of the rate box.
inline std::vector<double> treaty_features(const TreatySpec& t, double tech_rate, const EnvironmentConfig& cfg) {
  std::vector<double> f;
  f.reserve(cfg.treaty_dim());
  f.push_back(t.exposure / cfg.market.mean_exposure());
  for (int l = 0; l < cfg.market.n_lines; ++l) f.push_back(l == t.line ? 1.0 : 0.0);
  f.push_back(t.attachment / t.exposure);
  f.push_back(t.limit / t.exposure);
  f.push_back(t.retention);
  f.push_back(t.treaty_kind == TreatyKind::quota_share ? 1.0 : 0.0);
  f.push_back(10.0 * t.expected_attritional() / t.exposure);
  f.push_back(10.0 * t.cat_prob);
  f.push_back(t.cat_scale / t.exposure);
  f.push_back(tech_rate / cfg.box.rate().hi);
  return f;
}

struct PortfolioState {
  int agent_id = 0;
  double capital = 0.0;
  std::vector<std::pair<TreatySpec, Bid>> bound_treaties;
  /// Per-episode net loss (negated underwriting result), newest last.
  std::deque<double> trailing_losses;
  /// Outcome of each of the agent's recent bids, newest last.
  std::deque<bool> recent_bids;
  std::uint64_t bids_made = 0;
  std::uint64_t bids_won = 0;
  double premium_earned = 0.0;
  double claims_paid = 0.0;
  std::vector<bool> incumbent_lines;
  std::vector<double> premium_by_line;
  double latency_mean_ms = 0.0;

  double trailing_win_rate() const {
    if (recent_bids.empty()) return 0.0;
    return static_cast<double>(std::count(recent_bids.begin(), recent_bids.end(), true)) /
           static_cast<double>(recent_bids.size());
  }

  double trailing_cvar(double alpha) const {
    if (trailing_losses.empty()) return 0.0;
    std::vector<double> v(trailing_losses.begin(), trailing_losses.end());
    return risk::cvar(v, alpha);
  }
};

/// Public information shared by all agents.
struct MarketContext {
  std::int64_t episode = 0;
  std::int64_t horizon = 1;
  int active_agents = 0;
  int n_agents = 1;
};

struct Observation {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
};

/// Built from the treaty, the agent's own portfolio and public context only.
inline Observation observation_for_agent(const PortfolioState& own, const TreatySpec& t,
                                         const std::vector<double>& features, const MarketContext& ctx,
                                         const EnvironmentConfig& cfg) {
  Observation o;
  o.values = features;
  o.values.push_back(own.capital / cfg.initial_capital);
  o.values.push_back(own.trailing_win_rate());
  o.values.push_back(own.trailing_cvar(cfg.reward.alpha) / cfg.initial_capital);
  const bool holds = t.line >= 0 && static_cast<std::size_t>(t.line) < own.incumbent_lines.size() &&
                     own.incumbent_lines[static_cast<std::size_t>(t.line)];
  o.values.push_back(holds ? 1.0 : 0.0);
  o.values.push_back(ctx.horizon > 0 ? static_cast<double>(ctx.episode) / static_cast<double>(ctx.horizon)
                                     : 0.0);
  o.values.push_back(static_cast<double>(ctx.active_agents) / static_cast<double>(ctx.n_agents));
  return o;
}

/// Per-agent result of one episode.
struct AgentStep {
  int agent = 0;
  Observation observation;
  Bid bid;
  bool participated = false;
  bool declined = false;
  bool won = false;
  double premium = 0.0;
  double claim = 0.0;
  double commission = 0.0;
  double profit = 0.0;
  /// Trailing CVaR of per-episode losses, as a fraction of initial capital.
  double cvar = 0.0;
  double win_rate = 0.0;
  double inv_latency = 0.0;
  double cost_score = 0.0;
  double efficiency = 0.0;
  double reward = 0.0;
  double capital = 0.0;
  Observation next_observation;
  bool done = false;
};

struct EpisodeRecord {
  std::int64_t episode = 0;
  TreatySpec treaty;
  bool stressed = false;
  PlacementOutcome outcome;
  LossRealization loss;
  std::vector<AgentStep> agents;

  bool placed() const { return outcome.winner.has_value(); }
};

class MarketEnvironment {
 public:
  MarketEnvironment(EnvironmentConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        treaty_rng_(substream(seed, "treaty")),
        loss_rng_(substream(seed, "losses")),
        noise_rng_(substream(seed, "utility_noise")),
        latency_rng_(substream(seed, "latency")),
        pricing_(cfg_.pricing_samples, 8) {
    cfg_.validate();
    const auto lines = static_cast<std::size_t>(cfg_.market.n_lines);
    incumbent_.assign(lines, -1);
    portfolios_.resize(static_cast<std::size_t>(cfg_.n_agents));
    for (int i = 0; i < cfg_.n_agents; ++i) {
      auto& p = portfolios_[static_cast<std::size_t>(i)];
      p.agent_id = i;
      p.capital = cfg_.initial_capital;
      p.incumbent_lines.assign(lines, false);
      p.premium_by_line.assign(lines, 0.0);
      p.latency_mean_ms = uniform(latency_rng_, cfg_.latency_min_ms, cfg_.latency_max_ms);
    }
    draw_treaty();
  }

  const EnvironmentConfig& config() const { return cfg_; }
  std::int64_t episode() const { return episode_; }
  /// The treaty actually written, stress included.
  const TreatySpec& treaty() const { return treaty_; }
  /// The treaty as offered and described to agents (historical loss model).
  const TreatySpec& offer() const { return offer_; }
  const std::vector<double>& treaty_features() const { return features_; }
  const std::vector<PortfolioState>& portfolios() const { return portfolios_; }
  const PortfolioState& portfolio(int agent) const { return portfolios_.at(static_cast<std::size_t>(agent)); }
  std::optional<int> incumbent_for_line(int line) const {
    const int j = incumbent_.at(static_cast<std::size_t>(line));
    return j < 0 ? std::nullopt : std::optional<int>(j);
  }
  PricingModel& pricing() { return pricing_; }

  MarketContext context() const {
    MarketContext ctx;
    ctx.episode = episode_;
    ctx.horizon = std::max<std::int64_t>(1, cfg_.horizon);
    ctx.n_agents = cfg_.n_agents;
    ctx.active_agents = static_cast<int>(std::count_if(
        portfolios_.begin(), portfolios_.end(),
        [&](const PortfolioState& p) { return p.capital >= 0.1 * cfg_.initial_capital; }));
    return ctx;
  }

  Observation observe(int agent) const {
    return observation_for_agent(portfolio(agent), offer_, features_, context(), cfg_);
  }

  std::vector<Observation> observe_all() const {
    std::vector<Observation> out;
    for (int i = 0; i < cfg_.n_agents; ++i) out.push_back(observe(i));
    return out;
  }

  /// Capital an agent needs to write this bid on the current treaty.
  bool can_participate(int agent, const Bid& b) const {
    return portfolio(agent).capital >= cfg_.kappa * b.required_capacity(treaty_);
  }

  /// Insurer declines bids priced above (1 + max_loading) times expected claim.
  bool acceptable(const Bid& b) {
    if (cfg_.insurer.max_loading < 0.0) return true;
    return b.premium(treaty_) <= (1.0 + cfg_.insurer.max_loading) * pricing_.expected_claim(treaty_, b);
  }

  /// Advances one episode. `bids` holds one bid per agent in index order.
  EpisodeRecord step(std::vector<Bid> bids) {
    const auto n = static_cast<std::size_t>(cfg_.n_agents);
    if (bids.size() != n) throw ContractViolation("step: need exactly one bid per agent");
    const TreatySpec t = treaty_;
    const auto& prefs = cfg_.insurer;

    EpisodeRecord rec;
    rec.episode = episode_;
    rec.treaty = t;
    rec.stressed = cfg_.stress.active(episode_);
    rec.agents.resize(n);

    // Fixed draw counts per episode, whatever the participation pattern.
    std::vector<double> noise(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uniform01(latency_rng_);
      bids[i].agent_id = static_cast<int>(i);
      bids[i].submitted_at =
          portfolios_[i].latency_mean_ms * (1.0 + cfg_.latency_jitter * (2.0 * u - 1.0));
    }
    for (std::size_t i = 0; i < n; ++i) noise[i] = standard_normal(noise_rng_);

    PlacementOutcome& out = rec.outcome;
    out.treaty_id = t.id;
    out.bids = bids;
    out.utilities.assign(n, std::nullopt);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = rec.agents[i];
      s.agent = static_cast<int>(i);
      s.observation = observe(static_cast<int>(i));
      s.bid = bids[i];
      s.participated = can_participate(static_cast<int>(i), bids[i]);
      if (!s.participated) continue;
      s.declined = !acceptable(bids[i]);
      if (s.declined) continue;
      out.utilities[i] = deterministic_utility(t, bids[i], prefs, cfg_.box) + prefs.sigma_noise * noise[i];
    }

    const auto line = static_cast<std::size_t>(t.line);
    const std::optional<int> inc = incumbent_for_line(t.line);
    out.incumbent = inc;
    const auto scored = out.scored();
    if (!scored.empty()) {
      const Selection sel = select_winner(scored, inc, prefs);
      out.winner = sel.winner;
      out.incumbent_rule_used = sel.incumbent_rule_used;
      out.bound_terms = bids[static_cast<std::size_t>(*sel.winner)];
      out.premium_paid = out.bound_terms->premium(t);
      if (prefs.last_look_enabled && inc && *inc != *sel.winner &&
          out.utilities[static_cast<std::size_t>(*inc)]) {
        Bid revised = bids[static_cast<std::size_t>(*inc)];
        revised.premium_rate = std::max(cfg_.box.rate_min, revised.premium_rate * (1.0 - prefs.last_look_discount));
        out = last_look(out, revised, t, prefs, cfg_.box);
      }
    }

    rec.loss = sample_losses(t, loss_rng_);

    if (out.winner) {
      const auto w = static_cast<std::size_t>(*out.winner);
      const Payout pay = coverage_payout(t, *out.bound_terms, rec.loss);
      auto& s = rec.agents[w];
      s.won = true;
      s.premium = out.premium_paid;
      s.claim = pay.reinsurer_claim;
      s.commission = pay.commission;
      s.profit = s.premium - s.claim - s.commission;
      auto& p = portfolios_[w];
      p.bids_won += 1;
      p.premium_earned += s.premium;
      p.claims_paid += s.claim;
      p.premium_by_line[line] += s.premium;
      p.bound_treaties.emplace_back(t, *out.bound_terms);
      if (inc) portfolios_[static_cast<std::size_t>(*inc)].incumbent_lines[line] = false;
      p.incumbent_lines[line] = true;
      incumbent_[line] = *out.winner;
    }

    const double c0_cap = capital_cap(episode_);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = rec.agents[i];
      auto& p = portfolios_[i];
      if (s.participated) {
        p.bids_made += 1;
        p.recent_bids.push_back(s.won);
        if (p.recent_bids.size() > cfg_.window) p.recent_bids.pop_front();
      }
      p.trailing_losses.push_back(-s.profit);
      if (p.trailing_losses.size() > cfg_.window) p.trailing_losses.pop_front();
      p.capital = std::clamp(p.capital + s.profit + cfg_.replenish_rate * cfg_.initial_capital,
                             cfg_.capital_floor * cfg_.initial_capital, c0_cap);

      s.cvar = p.trailing_cvar(cfg_.reward.alpha) / cfg_.initial_capital;
      s.win_rate = p.trailing_win_rate();
      s.inv_latency = std::clamp(1.0 - s.bid.submitted_at / cfg_.latency_scale_ms, 0.0, 1.0);
      const Bid& priced = s.won ? *out.bound_terms : s.bid;
      s.cost_score = std::clamp(1.0 - (priced.premium_rate - cfg_.box.rate_min) / cfg_.box.rate().width(), 0.0, 1.0);
      s.efficiency = risk::efficiency(s.win_rate, s.inv_latency, s.cost_score, cfg_.reward.efficiency_weights);
      s.reward = s.won ? risk::reward(s.profit, s.cvar, s.efficiency, cfg_.reward)
                       : cfg_.reward.gamma_eff * s.efficiency;
      s.capital = p.capital;
    }

    ++episode_;
    draw_treaty();
    const bool done = cfg_.horizon > 0 && episode_ >= cfg_.horizon;
    for (std::size_t i = 0; i < n; ++i) {
      rec.agents[i].next_observation = observe(static_cast<int>(i));
      rec.agents[i].done = done;
    }
    return rec;
  }

  void save(io::BinaryWriter& w) const {
    w.i64(episode_);
    w.engine(treaty_rng_);
    w.engine(loss_rng_);
    w.engine(noise_rng_);
    w.engine(latency_rng_);
    write_treaty(w, offer_);
    write_treaty(w, treaty_);
    w.boolean(capacity_applied_);
    w.u64(incumbent_.size());
    for (int j : incumbent_) w.i64(j);
    w.u64(portfolios_.size());
    for (const auto& p : portfolios_) {
      w.f64(p.capital);
      w.u64(p.bound_treaties.size());
      for (const auto& [t, b] : p.bound_treaties) {
        write_treaty(w, t);
        write_bid(w, b);
      }
      w.f64s(std::vector<double>(p.trailing_losses.begin(), p.trailing_losses.end()));
      w.u64(p.recent_bids.size());
      for (bool b : p.recent_bids) w.boolean(b);
      w.u64(p.bids_made);
      w.u64(p.bids_won);
      w.f64(p.premium_earned);
      w.f64(p.claims_paid);
      for (bool b : p.incumbent_lines) w.boolean(b);
      for (double x : p.premium_by_line) w.f64(x);
      w.f64(p.latency_mean_ms);
    }
  }

  void load(io::BinaryReader& r) {
    episode_ = r.i64();
    r.engine(treaty_rng_);
    r.engine(loss_rng_);
    r.engine(noise_rng_);
    r.engine(latency_rng_);
    offer_ = read_treaty(r);
    treaty_ = read_treaty(r);
    features_ = market::treaty_features(offer_, technical_rate(offer_, pricing_), cfg_);
    capacity_applied_ = r.boolean();
    if (r.u64() != incumbent_.size()) throw FormatError("checkpoint: line count mismatch");
    for (int& j : incumbent_) j = static_cast<int>(r.i64());
    if (r.u64() != portfolios_.size()) throw FormatError("checkpoint: agent count mismatch");
    for (auto& p : portfolios_) {
      p.capital = r.f64();
      p.bound_treaties.clear();
      const std::uint64_t nb = r.u64();
      for (std::uint64_t k = 0; k < nb; ++k) {
        TreatySpec t = read_treaty(r);
        p.bound_treaties.emplace_back(t, read_bid(r));
      }
      const auto losses = r.f64s();
      p.trailing_losses.assign(losses.begin(), losses.end());
      p.recent_bids.clear();
      const std::uint64_t nr = r.u64();
      for (std::uint64_t k = 0; k < nr; ++k) p.recent_bids.push_back(r.boolean());
      p.bids_made = r.u64();
      p.bids_won = r.u64();
      p.premium_earned = r.f64();
      p.claims_paid = r.f64();
      for (std::size_t l = 0; l < p.incumbent_lines.size(); ++l) p.incumbent_lines[l] = r.boolean();
      for (double& x : p.premium_by_line) x = r.f64();
      p.latency_mean_ms = r.f64();
    }
  }

 private:
  double capital_cap(std::int64_t ep) const {
    const auto& s = cfg_.stress;
    if (s.kind == StressKind::capacity && s.active(ep)) return s.capacity_factor * cfg_.initial_capital;
    return cfg_.initial_capital;
  }

  // Draws the next offer and applies any stress due at the new episode.
  void draw_treaty() {
    TreatySpec t = generate_treaty(treaty_rng_, cfg_.market, static_cast<std::uint64_t>(episode_));
    const auto& s = cfg_.stress;
    offer_ = t;
    features_ = market::treaty_features(offer_, technical_rate(offer_, pricing_), cfg_);
    if (s.kind == StressKind::catastrophe && s.active(episode_)) t = stress_treaty(t, s.cat_multiplier);
    treaty_ = t;
    if (s.kind == StressKind::capacity && s.active(episode_) && !capacity_applied_) {
      for (auto& p : portfolios_) p.capital *= s.capacity_factor;
      capacity_applied_ = true;
    }
  }

  static void write_treaty(io::BinaryWriter& w, const TreatySpec& t) {
    w.u64(t.id);
    w.u8(t.treaty_kind == TreatyKind::quota_share ? 1 : 0);
    w.f64(t.exposure);
    w.i64(t.line);
    w.f64(t.attachment);
    w.f64(t.limit);
    w.f64(t.retention);
    w.f64(t.attritional_freq);
    w.f64(t.attritional_severity_mean);
    w.f64(t.attritional_severity_sigma);
    w.f64(t.cat_prob);
    w.f64(t.cat_tail_index);
    w.f64(t.cat_scale);
  }

  static TreatySpec read_treaty(io::BinaryReader& r) {
    TreatySpec t;
    t.id = r.u64();
    t.treaty_kind = r.u8() ? TreatyKind::quota_share : TreatyKind::excess_of_loss;
    t.exposure = r.f64();
    t.line = static_cast<int>(r.i64());
    t.attachment = r.f64();
    t.limit = r.f64();
    t.retention = r.f64();
    t.attritional_freq = r.f64();
    t.attritional_severity_mean = r.f64();
    t.attritional_severity_sigma = r.f64();
    t.cat_prob = r.f64();
    t.cat_tail_index = r.f64();
    t.cat_scale = r.f64();
    return t;
  }

  static void write_bid(io::BinaryWriter& w, const Bid& b) {
    w.i64(b.agent_id);
    w.f64(b.premium_rate);
    w.f64(b.quota);
    w.f64(b.ceding_commission);
    w.f64(b.attachment_offset);
    w.f64(b.limit_factor);
    w.f64(b.submitted_at);
    w.boolean(b.clamped);
  }

  static Bid read_bid(io::BinaryReader& r) {
    Bid b;
    b.agent_id = static_cast<int>(r.i64());
    b.premium_rate = r.f64();
    b.quota = r.f64();
    b.ceding_commission = r.f64();
    b.attachment_offset = r.f64();
    b.limit_factor = r.f64();
    b.submitted_at = r.f64();
    b.clamped = r.boolean();
    return b;
  }

  EnvironmentConfig cfg_;
  Engine treaty_rng_;
  Engine loss_rng_;
  Engine noise_rng_;
  Engine latency_rng_;
  PricingModel pricing_;
  std::int64_t episode_ = 0;
  TreatySpec offer_;
  TreatySpec treaty_;
  std::vector<double> features_;
  std::vector<int> incumbent_;
  std::vector<PortfolioState> portfolios_;
  bool capacity_applied_ = false;
};

}  // namespace treatybid::market
