#include <gtest/gtest.h>

#include <sstream>

#include "../common/checks.hpp"
#include "gen.hpp"
#include "treatybid/error.hpp"
#include "treatybid/learn/checkpoint.hpp"
#include "treatybid/learn/dense.hpp"
#include "treatybid/learn/optim.hpp"

using namespace treatybid;
using namespace treatybid::learn;
using treatybid::testing::Gen;

namespace {

/// Straightforward re-implementation: explicit matrices, no shared offsets.
std::vector<double> reference_forward(const DenseNet& net, std::vector<double> a) {
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const std::size_t n_out = net.layer_sizes()[l + 1];
    std::vector<double> z(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      z[o] = net.bias(l, o);
      for (std::size_t i = 0; i < a.size(); ++i) z[o] += net.weight(l, o, i) * a[i];
      if (l + 1 < net.layers()) z[o] = std::max(0.0, z[o]);
    }
    a = std::move(z);
  }
  return a;
}

DenseNet random_net(Gen& g, std::uint64_t seed) {
  std::vector<std::size_t> sizes{g.size(1, 7)};
  for (std::size_t h = 0, n = g.size(0, 3); h < n; ++h) sizes.push_back(g.size(1, 9));
  sizes.push_back(g.size(1, 4));
  Engine eng = substream(seed, "net");
  auto net = DenseNet::initialized(sizes, eng);
  for (double& p : net.mutable_params()) p += g.uniform(-0.1, 0.1);
  return net;
}

}  // namespace

TEST(Dense, ParamCountClosedForm) {
  const std::vector<std::size_t> sizes{5, 7, 3, 2};
  EXPECT_EQ(DenseNet::param_count_for(sizes), 5u * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2);
  EXPECT_EQ(DenseNet(sizes).num_params(), DenseNet::param_count_for(sizes));
  EXPECT_THROW(DenseNet(std::vector<std::size_t>{3}), ConfigError);
  EXPECT_THROW(DenseNet(std::vector<std::size_t>{3, 0, 1}), ConfigError);
}

TEST(Dense, ZeroNetworkOutputsZero) {
  DenseNet net({4, 8, 3});
  const auto y = net.forward(std::vector<double>{1, -2, 3, 4});
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Dense, IdentityLayer) {
  DenseNet net({3, 3});
  for (std::size_t i = 0; i < 3; ++i) net.mutable_params()[net.weight_index(0, i, i)] = 1.0;
  const std::vector<double> x{0.5, 2.0, 7.0};
  EXPECT_EQ(net.forward(x), x);
}

TEST(Dense, ForwardMatchesReferenceImplementation) {
  Gen g(21);
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto net = random_net(g, k);
    const auto x = g.vec(net.input_dim(), -3, 3);
    const auto y = net.forward(x);
    const auto ref = reference_forward(net, x);
    ASSERT_EQ(y.size(), ref.size());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Dense, DimensionMismatchThrows) {
  DenseNet net({3, 2});
  EXPECT_THROW(net.forward(std::vector<double>{1, 2}), ContractViolation);
}

TEST(Dense, ZeroOutputGradientGivesZeroGradients) {
  Gen g(22);
  const auto net = random_net(g, 1);
  DenseNet::Cache c;
  net.forward(g.vec(net.input_dim(), -1, 1), &c);
  std::vector<double> grad(net.num_params(), 0.0);
  const auto gin = net.backward(c, std::vector<double>(net.output_dim(), 0.0), grad);
  for (double v : grad) EXPECT_EQ(v, 0.0);
  for (double v : gin) EXPECT_EQ(v, 0.0);
}

TEST(Dense, StaleCacheThrows) {
  Gen g(23);
  auto net = random_net(g, 2);
  DenseNet::Cache c;
  net.forward(g.vec(net.input_dim(), -1, 1), &c);
  net.mutable_params()[0] += 0.5;
  std::vector<double> grad(net.num_params(), 0.0);
  EXPECT_THROW(net.backward(c, std::vector<double>(net.output_dim(), 1.0), grad), ContractViolation);
  DenseNet other = net;
  DenseNet::Cache c2;
  net.forward(g.vec(net.input_dim(), -1, 1), &c2);
  EXPECT_THROW(other.backward(c2, std::vector<double>(other.output_dim(), 1.0), grad), ContractViolation);
}

TEST(Dense, InputGradientMatchesFiniteDifference) {
  Gen g(24);
  for (std::uint64_t k = 0; k < 30; ++k) {
    const auto net = random_net(g, 100 + k);
    const auto x = g.vec(net.input_dim(), -2, 2);
    DenseNet::Cache c;
    net.forward(x, &c);
    std::vector<double> grad(net.num_params(), 0.0);
    const auto gin = net.backward(c, std::vector<double>(net.output_dim(), 1.0), grad);
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += 1e-6;
      xm[i] -= 1e-6;
      double fp = 0, fm = 0;
      for (double v : net.forward(xp)) fp += v;
      for (double v : net.forward(xm)) fm += v;
      EXPECT_NEAR(gin[i], (fp - fm) / 2e-6, 1e-5 * std::max(1.0, std::abs(gin[i])));
    }
  }
}

TEST(GradCheck, LinearNetIsExact) {
  Gen g(25);
  Engine eng = substream(3, "lin");
  const auto net = DenseNet::initialized({4, 3}, eng);
  const auto r = finite_diff_check(net, g.vec(4, -1, 1), 1e-5);
  EXPECT_FALSE(r.kink);
  EXPECT_LT(r.max_relative_error, 1e-9);
}

TEST(GradCheck, HundredRandomPairsWithinTolerance) {
  const auto r = checks::gradient_check(100);
  EXPECT_EQ(r.pairs, 100u);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_LT(r.seconds, 30.0);
}

TEST(Adam, ZeroGradientLeavesParamsAndMoments) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const auto before = p;
  AdamState s(3, 1e-3);
  for (int k = 0; k < 5; ++k) adam_step(p, std::vector<double>(3, 0.0), s);
  EXPECT_EQ(p, before);
  for (double m : s.first_moment) EXPECT_EQ(m, 0.0);
  for (double v : s.second_moment) EXPECT_EQ(v, 0.0);
}

TEST(Adam, FirstStepClosedForm) {
  for (double g : {0.3, -2.5, 1e-3, 40.0}) {
    std::vector<double> p{0.0};
    AdamState s(1, 0.01);
    adam_step(p, std::vector<double>{g}, s);
    EXPECT_NEAR(p[0], -0.01 * g / (std::abs(g) + s.epsilon), 1e-15);
    EXPECT_NEAR(p[0], -0.01 * (g > 0 ? 1.0 : -1.0), 1e-7);
  }
}

TEST(Adam, DeterministicAndShapeChecked) {
  Gen g(26);
  const auto grads = g.vec(10, -1, 1);
  std::vector<double> a(10, 0.5), b(10, 0.5);
  AdamState sa(10, 1e-3), sb(10, 1e-3);
  for (int k = 0; k < 20; ++k) {
    adam_step(a, grads, sa);
    adam_step(b, grads, sb);
  }
  EXPECT_EQ(a, b);
  EXPECT_THROW(adam_step(a, std::vector<double>(3, 0.0), sa), ContractViolation);
}

TEST(ClipGrad, RescalesToMaxNorm) {
  std::vector<double> g{3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
  std::vector<double> small{0.1};
  clip_grad_norm(small, 1.0);
  EXPECT_EQ(small[0], 0.1);
}

TEST(OU, ZeroSigmaStaysAtZero) {
  OUProcess p(3, 0.15, 0.0);
  Engine eng = substream(1, "ou");
  for (int k = 0; k < 1000; ++k) ou_sample(p, eng);
  for (double x : p.state) EXPECT_EQ(x, 0.0);
}

TEST(OU, ZeroSigmaDecaysGeometrically) {
  OUProcess p(1, 0.15, 0.0, 0.5);
  p.state[0] = 2.0;
  Engine eng = substream(2, "ou");
  double expected = 2.0;
  for (int k = 0; k < 50; ++k) {
    ou_sample(p, eng);
    expected *= 1.0 - 0.15 * 0.5;
    EXPECT_NEAR(p.state[0], expected, 1e-14);
  }
}

namespace {
double ou_long_run_variance(double dt, std::size_t steps) {
  OUProcess p(1, 0.15, 0.2, dt);
  Engine eng = substream(7, "ou_variance");
  for (int k = 0; k < 2000; ++k) ou_sample(p, eng);
  double s = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double x = ou_sample(p, eng)[0];
    s += x;
    ss += x * x;
  }
  const double n = static_cast<double>(steps);
  return ss / n - (s / n) * (s / n);
}
}  // namespace

TEST(OU, StationaryVarianceNearContinuousFormula) {
  // Euler discretization at small dt approaches sigma^2 / (2 theta).
  const double var = ou_long_run_variance(0.1, 1000000);
  EXPECT_NEAR(var, 0.2 * 0.2 / (2 * 0.15), 0.05 * 0.2 * 0.2 / (2 * 0.15));
}

TEST(OU, StationaryVarianceMatchesDiscreteFormulaAtUnitStep) {
  // AR(1) with coefficient 1 - theta: sigma^2 / (2 theta - theta^2).
  const double var = ou_long_run_variance(1.0, 1000000);
  const double exact = 0.04 / (2 * 0.15 - 0.15 * 0.15);
  EXPECT_NEAR(var, exact, 0.03 * exact);
}

TEST(Squash, MidpointSaturationAndBounds) {
  const std::vector<Bounds> box{{0.01, 0.08}, {-0.5, 0.5}, {0.5, 2.0}};
  const auto mid = squash_action(std::vector<double>{0, 0, 0}, box);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(mid[i], 0.5 * (box[i].lo + box[i].hi), 1e-15);
  const auto hi = squash_action(std::vector<double>{1e6, 40, 25}, box);
  const auto lo = squash_action(std::vector<double>{-1e6, -40, -25}, box);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(hi[i], box[i].hi);
    EXPECT_GT(hi[i], box[i].hi - 1e-9);
    EXPECT_GT(lo[i], box[i].lo);
  }
  EXPECT_THROW(squash_action(std::vector<double>{0}, std::vector<Bounds>{{1.0, 1.0}}), ContractViolation);
  EXPECT_THROW(squash_action(std::vector<double>{0, 0}, box), ContractViolation);
}

TEST(Squash, RandomVectorsStayInsideAndRoundTrip) {
  Gen g(27);
  for (int k = 0; k < 10000; ++k) {
    const std::size_t d = g.size(1, 5);
    std::vector<Bounds> box;
    for (std::size_t i = 0; i < d; ++i) {
      const double lo = g.uniform(-10, 10);
      box.push_back({lo, lo + g.uniform(1e-3, 20)});
    }
    const auto raw = g.vec(d, -8, 8);
    const auto y = squash_action(raw, box);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_GT(y[i], box[i].lo);
      EXPECT_LT(y[i], box[i].hi);
    }
    const auto back = unsquash_action(y, box);
    const auto again = squash_action(back, box);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_NEAR(again[i], y[i], 1e-9 * std::max(1.0, std::abs(y[i])));
      if (std::abs(raw[i]) < 4) {
        EXPECT_NEAR(back[i], raw[i], 1e-6);
      }
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Gen g(28);
  Engine eng = substream(9, "ckpt");
  auto net = DenseNet::initialized({6, 5, 2}, eng);
  AdamState adam(net.num_params(), 3e-4);
  adam_step(net.mutable_params(), g.vec(net.num_params(), -1, 1), adam);
  Checkpoint c;
  c.agents.push_back({0, "reinsurer", "mappo"});
  c.add_network("actor0", net, &adam);
  c.vectors.emplace_back("log_std", std::vector<double>{-0.5, 1e-300, -0.0, 0.1 + 0.2});
  c.counters.emplace_back("episode", 123456789012345);
  c.rng_states.emplace_back("policy0", save_engine(eng));
  c.blob = std::string("\0\x01\xff", 3);

  std::stringstream s1;
  write_checkpoint(s1, c);
  const std::string bytes = s1.str();
  std::stringstream in(bytes);
  const Checkpoint back = read_checkpoint(in);
  std::stringstream s2;
  write_checkpoint(s2, back);
  EXPECT_EQ(s2.str(), bytes);

  DenseNet restored({6, 5, 2});
  AdamState restored_adam;
  back.restore_network("actor0", restored, &restored_adam);
  ASSERT_EQ(restored.num_params(), net.num_params());
  EXPECT_EQ(std::memcmp(restored.params().data(), net.params().data(), net.num_params() * sizeof(double)), 0);
  EXPECT_EQ(restored_adam.second_moment, adam.second_moment);
  EXPECT_EQ(restored_adam.step_count, 1u);
  EXPECT_EQ(back.counter("episode"), 123456789012345);
  EXPECT_TRUE(std::signbit(back.vector("log_std")[2]));
  Engine e2;
  back.restore_rng("policy0", e2);
  EXPECT_EQ(e2(), eng());
  EXPECT_EQ(back.agents, c.agents);
}

TEST(Checkpoint, CorruptInputRejected) {
  std::stringstream bad("NOTACKPT and more");
  EXPECT_THROW(read_checkpoint(bad), FormatError);
  Checkpoint c;
  c.counters.emplace_back("x", 1);
  std::stringstream s;
  write_checkpoint(s, c);
  const std::string bytes = s.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
  EXPECT_THROW(c.network("missing"), FormatError);
}
