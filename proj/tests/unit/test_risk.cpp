#include <gtest/gtest.h>

#include <numeric>

#include "../common/checks.hpp"
#include "gen.hpp"
#include "treatybid/error.hpp"
#include "treatybid/risk/metrics.hpp"

using namespace treatybid;
using treatybid::testing::Gen;

TEST(Cvar, ConstantSampleGivesConstant) {
  const std::vector<double> v(37, 4.25);
  for (double a : {0.0, 0.5, 0.95, 0.99}) EXPECT_DOUBLE_EQ(risk::cvar(v, a), 4.25);
}

TEST(Cvar, OneToHundredAt95IsNinetyEight) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(risk::cvar_tail_count(100, 0.95), 5u);
  EXPECT_DOUBLE_EQ(risk::cvar(v, 0.95), 98.0);
}

TEST(Cvar, AlphaZeroIsMean) {
  Gen g(1);
  const auto v = g.vec(50, -3, 9);
  EXPECT_NEAR(risk::cvar(v, 0.0), risk::mean(v), 1e-12);
}

TEST(Cvar, Errors) {
  EXPECT_THROW(risk::cvar(std::vector<double>{}, 0.5), ContractViolation);
  EXPECT_THROW(risk::cvar(std::vector<double>{1.0}, 1.0), ContractViolation);
  EXPECT_THROW(risk::cvar(std::vector<double>{1.0}, -0.1), ContractViolation);
}

TEST(Cvar, MatchesSortAndAverageOracleExactly) {
  const auto r = checks::cvar_oracle_check(1000);
  EXPECT_EQ(r.sets, 1000u);
  EXPECT_EQ(r.mismatches, 0u);
}

TEST(Cvar, CoherenceProperties) {
  const auto r = checks::cvar_coherence_check(10000);
  EXPECT_EQ(r.cases, 10000u);
  EXPECT_EQ(r.translation_failures, 0u);
  EXPECT_EQ(r.homogeneity_failures, 0u);
  EXPECT_EQ(r.monotonicity_failures, 0u);
  EXPECT_EQ(r.mean_dominance_failures, 0u);
}

TEST(Cvar, PermutationInvariant) {
  Gen g(3);
  for (int k = 0; k < 200; ++k) {
    auto v = g.losses(g.size(1, 80));
    const double alpha = g.uniform(0.0, 0.99);
    const double base = risk::cvar(v, alpha);
    std::shuffle(v.begin(), v.end(), g.engine());
    EXPECT_EQ(risk::cvar(v, alpha), base);
  }
}

TEST(Reward, DirectFormula) {
  risk::RewardWeights w;
  w.lambda_cvar = 1.0;
  w.gamma_eff = 0.1;
  EXPECT_NEAR(risk::reward(10.0, 2.0, 0.5, w), 8.05, 1e-12);
}

TEST(Reward, ZeroWeightsGiveProfit) {
  risk::RewardWeights w;
  w.lambda_cvar = 0.0;
  w.gamma_eff = 0.0;
  EXPECT_EQ(risk::reward(3.7, 11.0, 0.9, w), 3.7);
}

TEST(Reward, PaperTable4Row) {
  risk::RewardWeights w;
  w.lambda_cvar = 1.0;
  w.gamma_eff = 0.0;
  EXPECT_NEAR(risk::reward(9.3, 0.17, 0.4, w), 9.13, 1e-12);
}

TEST(Reward, WeightValidation) {
  risk::RewardWeights w;
  EXPECT_NO_THROW(w.validate());
  w.efficiency_weights = {0.4, 0.3, 0.2};
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Efficiency, Examples) {
  EXPECT_NEAR(risk::efficiency(1, 1, 1, {0.4, 0.3, 0.3}), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(risk::efficiency(0.415, 0.2, 0.9, {1, 0, 0}), 0.415);
  EXPECT_THROW(risk::efficiency(0.5, 0.5, 0.5, {0.4, 0.3, 0.2}), ConfigError);
}

TEST(Efficiency, ConvexCombinationBounds) {
  Gen g(4);
  for (int k = 0; k < 2000; ++k) {
    const double a = g.uniform(0, 1);
    const double b = g.uniform(0, 1 - a);
    const std::array<double, 3> w{a, b, 1.0 - a - b};
    const double x = g.uniform(0, 1), y = g.uniform(0, 1), z = g.uniform(0, 1);
    const double e = risk::efficiency(x, y, z, w);
    EXPECT_GE(e, std::min({x, y, z}) - 1e-12);
    EXPECT_LE(e, std::max({x, y, z}) + 1e-12);
  }
}

TEST(LossRatio, Examples) {
  EXPECT_DOUBLE_EQ(risk::loss_ratio(59, 100), 0.59);
  EXPECT_EQ(risk::loss_ratio(0, 100), 0.0);
  EXPECT_THROW(risk::loss_ratio(1, 0), DegenerateError);
  EXPECT_THROW(risk::loss_ratio(1, -5), DegenerateError);
}

TEST(Sharpe, TwoPoint) { EXPECT_DOUBLE_EQ(risk::sharpe(std::vector<double>{1, 3}), 2.0); }

TEST(Sharpe, ConstantIsDegenerate) {
  EXPECT_THROW(risk::sharpe(std::vector<double>(10, 2.0)), DegenerateError);
}

TEST(Sharpe, MonteCarloMirrorsTable4) {
  Gen g(47);
  const double sigma = 3.0;
  std::vector<double> v(10000);
  for (double& x : v) x = g.normal(0.47 * sigma, sigma);
  EXPECT_NEAR(risk::sharpe(v), 0.47, 0.05 * 0.47);
}

TEST(Diversification, Examples) {
  EXPECT_DOUBLE_EQ(risk::diversification(std::vector<double>{5.0}), 0.0);
  for (int L = 1; L <= 6; ++L) {
    EXPECT_NEAR(risk::diversification(std::vector<double>(static_cast<std::size_t>(L), 2.0)), 1.0 - 1.0 / L, 1e-12);
  }
  EXPECT_DOUBLE_EQ(risk::diversification(std::vector<double>{0.5, 0.5, 0, 0}), 0.5);
  EXPECT_THROW(risk::diversification(std::vector<double>{0, 0}), DegenerateError);
}

namespace {
std::vector<risk::RiskReturnPoint> brute_frontier(const std::vector<risk::RiskReturnPoint>& pts) {
  std::vector<risk::RiskReturnPoint> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      const auto& q = pts[j];
      const auto& p = pts[i];
      dominated = q.profit >= p.profit && q.cvar <= p.cvar && (q.profit > p.profit || q.cvar < p.cvar);
    }
    if (!dominated) out.push_back(pts[i]);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.cvar < b.cvar || (a.cvar == b.cvar && a.profit > b.profit);
  });
  return out;
}
}  // namespace

TEST(Pareto, PaperPairBothRetained) {
  const std::vector<risk::RiskReturnPoint> pts{{10.1, 0.23}, {7.2, 0.13}};
  const auto f = risk::pareto_frontier(pts);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0], (risk::RiskReturnPoint{7.2, 0.13}));
  EXPECT_EQ(f[1], (risk::RiskReturnPoint{10.1, 0.23}));
}

TEST(Pareto, StrictDomination) {
  const std::vector<risk::RiskReturnPoint> pts{{10, 0.2}, {9, 0.3}};
  const auto f = risk::pareto_frontier(pts);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0], (risk::RiskReturnPoint{10, 0.2}));
}

TEST(Pareto, SingletonAndEmpty) {
  const std::vector<risk::RiskReturnPoint> one{{1, 2}};
  EXPECT_EQ(risk::pareto_frontier(one), one);
  EXPECT_TRUE(risk::pareto_frontier(std::vector<risk::RiskReturnPoint>{}).empty());
}

TEST(Pareto, MatchesBruteForceOracle) {
  Gen g(100);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<risk::RiskReturnPoint> pts;
    const std::size_t n = trial == 0 ? 100 : g.size(1, 100);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid forces ties in both coordinates.
      pts.push_back({std::round(g.uniform(0, 20)) / 2.0, std::round(g.uniform(0, 20)) / 4.0});
    }
    const auto f = risk::pareto_frontier(pts);
    EXPECT_EQ(f, brute_frontier(pts));
    EXPECT_EQ(risk::pareto_frontier(f), f);
  }
}
