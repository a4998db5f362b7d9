#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "h2o.hpp"
#include "oracles.hpp"

using namespace h2o::dqn;

namespace {

Transition tr(std::vector<double> s, int a, double r, std::vector<double> n, bool terminal = false) {
  return {std::move(s), a, r, std::move(n), terminal};
}

AgentConfig linear_cfg(double lr) {
  AgentConfig c;
  c.hidden = {};
  c.learning_rate = lr;
  c.minibatch_size = 1;
  c.epsilon_start = 0.0;
  return c;
}

std::vector<double> random_vec(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST(QNetwork, ZeroWeightsGiveZeroOutput) {
  QNetwork net({4, 10, 10, 3});
  auto q = net.forward(std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(q, (std::vector<double>{0, 0, 0}));
}

TEST(QNetwork, OneByOneIsLinear) {
  QNetwork net({1, 1});
  net.weights(0)[0] = 2.5;
  EXPECT_EQ(net.forward(std::vector<double>{-3.0})[0], -7.5);
}

TEST(QNetwork, ForwardIsDeterministicAndChecksDims) {
  std::mt19937_64 rng(1);
  QNetwork net({5, 10, 10, 4});
  net.init_uniform(rng, 0.1);
  const auto x = random_vec(rng, 5);
  EXPECT_EQ(net.forward(x), net.forward(x));
  EXPECT_EQ(net.forward(x).size(), 4u);
  EXPECT_THROW(net.forward(std::vector<double>{1.0}), DimensionMismatch);
  for (const auto& w : net.weights(1)) EXPECT_LE(std::abs(w), 0.1);
}

TEST(QNetwork, JsonSnapshotRoundTrip) {
  std::mt19937_64 rng(2);
  QNetwork net({3, 10, 10, 2});
  net.init_uniform(rng, 0.1);
  EXPECT_EQ(QNetwork::from_json(net.to_json()), net);
  auto j = net.to_json();
  j["layers"][0]["biases"].erase(0);
  EXPECT_THROW(QNetwork::from_json(j), DimensionMismatch);
}

TEST(QNetwork, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> width(1, 6);
  double worst = 0.0;
  int checked = 0;
  for (int net_i = 0; net_i < 25; ++net_i) {
    QNetwork net({width(rng), 10, 10, width(rng) + 1});
    net.init_uniform(rng, 0.5);
    const auto x = random_vec(rng, net.input_dim());
    const int action = net_i % net.action_dim();
    std::vector<std::vector<double>> acts;
    net.forward_cached(x, acts);
    bool near_kink = false;
    for (std::size_t l = 1; l + 1 < acts.size(); ++l)
      for (double a : acts[l]) near_kink = near_kink || (a > 0.0 && a < 1e-5);
    if (near_kink) continue;
    QNetwork grad = net.zeros_like();
    net.backprop(acts, action, 1.0, grad);
    for (std::size_t l = 0; l < net.layer_count(); ++l)
      for (bool bias : {false, true}) {
        const auto& g = bias ? grad.biases(l) : grad.weights(l);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double num = oracle::numeric_grad(net, x, action, l, i, bias);
          const double err = std::abs(g[i] - num) / std::max(1e-7, std::abs(g[i]) + std::abs(num));
          worst = std::max(worst, err);
          ++checked;
        }
      }
  }
  EXPECT_GT(checked, 2000);
  EXPECT_LT(worst, 1e-4);
}

TEST(SelectAction, GreedyAndTieBreak) {
  EXPECT_EQ(Agent::greedy({1.0, 3.0, 2.0}), 1);
  EXPECT_EQ(Agent::greedy({2.0, 2.0}), 0);
  AgentConfig c;
  c.epsilon_start = 0.0;
  Agent a(3, 2, c);
  for (std::size_t l = 0; l < a.eval().layer_count(); ++l) {
    std::fill(a.eval().weights(l).begin(), a.eval().weights(l).end(), 0.0);
    std::fill(a.eval().biases(l).begin(), a.eval().biases(l).end(), 0.0);
  }
  EXPECT_EQ(a.select_action(std::vector<double>{1, 2, 3}), 0);
}

TEST(SelectAction, UniformWhenEpsilonIsOne) {
  AgentConfig c;
  c.seed = 99;
  Agent a(2, 4, c);
  a.set_epsilon(1.0);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 10000; ++i) ++counts[static_cast<std::size_t>(a.select_action(std::vector<double>{0.3, 0.4}))];
  const double sigma = std::sqrt(10000 * 0.25 * 0.75);
  for (int n : counts) EXPECT_LE(std::abs(n - 2500), 3 * sigma) << n;
}

TEST(ReplayMemory, FifoEviction) {
  ReplayMemory m(2);
  EXPECT_TRUE(m.empty());
  m.push(tr({1}, 0, 1, {1}));
  EXPECT_EQ(m.size(), 1u);
  m.push(tr({2}, 1, 2, {2}));
  m.push(tr({3}, 0, 3, {3}, true));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].reward, 2.0);
  EXPECT_EQ(m[1], tr({3}, 0, 3, {3}, true));
}

TEST(ReplayMemory, NeverExceedsCapacity) {
  ReplayMemory m(500);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    m.push(tr({double(i)}, 0, i, {0}));
    EXPECT_LE(m.size(), 500u);
  }
  EXPECT_EQ(m[0].reward, 1500.0);
  EXPECT_EQ(m[499].reward, 1999.0);
  auto idx = m.sample_indices(32, rng);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(std::unique(idx.begin(), idx.end()), idx.end());
  for (auto i : idx) EXPECT_LT(i, 500u);
}

TEST(TrainStep, TerminalTargetIsReward) {
  Agent a(2, 2, AgentConfig{});
  EXPECT_EQ(a.td_target(tr({1, 0}, 0, 0.7, {5, 5}, true)), 0.7);
  const auto next = a.target().forward(std::vector<double>{0.2, 0.1});
  EXPECT_DOUBLE_EQ(a.td_target(tr({1, 0}, 0, 0.7, {0.2, 0.1})),
                   0.7 + 0.9 * *std::max_element(next.begin(), next.end()));
}

TEST(TrainStep, EmptyMemoryThrows) {
  Agent a(2, 2, AgentConfig{});
  EXPECT_THROW(a.train_step(), EmptyMemory);
}

TEST(TrainStep, ClippedErrorFiveUpdatesLikeOne) {
  AgentConfig c;
  c.seed = 8;
  Agent a(3, 2, c), b(3, 2, c);
  const std::vector<double> s{0.5, -0.2, 0.9};
  const double q = a.eval().forward(s)[1];
  a.store_transition(tr(s, 1, q + 1.0, s, true));
  b.store_transition(tr(s, 1, q + 5.0, s, true));
  a.train_step();
  b.train_step();
  for (std::size_t l = 0; l < a.eval().layer_count(); ++l)
    for (std::size_t i = 0; i < a.eval().weights(l).size(); ++i)
      EXPECT_NEAR(a.eval().weights(l)[i], b.eval().weights(l)[i], 1e-12);
}

TEST(TrainStep, ConvergesOnFixedTarget) {
  Agent a(2, 3, linear_cfg(0.05));
  const std::vector<double> s{1.0, 0.5};
  a.store_transition(tr(s, 2, 0.5, s, true));
  double prev = std::abs(a.eval().forward(s)[2] - 0.5);
  for (int i = 0; i < 200; ++i) {
    a.train_step();
    const double gap = std::abs(a.eval().forward(s)[2] - 0.5);
    EXPECT_LE(gap, prev + 1e-15);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(TrainStep, OneHotLinearNetFollowsTabularUpdate) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 50; ++k) {
    auto c = linear_cfg(0.1);
    c.discount = 0.0;
    c.seed = static_cast<std::uint64_t>(k + 1);
    Agent a(4, 3, c);
    const int s = k % 4, act = k % 3;
    std::vector<double> x(4, 0.0);
    x[static_cast<std::size_t>(s)] = 1.0;
    std::vector<std::vector<double>> table;
    for (int i = 0; i < 4; ++i) {
      std::vector<double> xi(4, 0.0);
      xi[static_cast<std::size_t>(i)] = 1.0;
      table.push_back(a.eval().forward(xi));
    }
    const double r = u(rng);
    const double before = table[static_cast<std::size_t>(s)][static_cast<std::size_t>(act)];
    const double ref = q_update_reference(table, s, act, r, s, 0.1, 0.0);
    a.store_transition(tr(x, act, r, x, true));
    a.train_step();
    const double after = a.eval().forward(x)[static_cast<std::size_t>(act)];
    EXPECT_EQ(after > before, ref > before);
    EXPECT_EQ(after < before, ref < before);
  }
}

TEST(TrainStep, StaysFiniteOverTenThousandSteps) {
  AgentConfig c;
  c.seed = 5;
  Agent a(6, 4, c);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> r(-50.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    a.store_transition(tr(random_vec(rng, 6), i % 4, r(rng), random_vec(rng, 6), i % 7 == 0));
    a.train_step();
    if (i % 300 == 299) a.sync_target();
  }
  EXPECT_TRUE(a.eval().all_finite());
  EXPECT_EQ(a.memory().size(), 500u);
}

TEST(SyncTarget, CopiesEvalAndIsIdempotent) {
  AgentConfig c;
  Agent a(3, 2, c);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 40; ++i) a.store_transition(tr(random_vec(rng, 3), i % 2, 1.0, random_vec(rng, 3)));
  a.train_step();
  EXPECT_FALSE(a.target() == a.eval());
  a.sync_target();
  EXPECT_EQ(a.target(), a.eval());
  const auto x = random_vec(rng, 3);
  EXPECT_EQ(a.target().forward(x), a.eval().forward(x));
  a.sync_target();
  EXPECT_EQ(a.target(), a.eval());
  const auto frozen = a.target();
  a.train_step();
  EXPECT_EQ(a.target(), frozen);
  EXPECT_FALSE(a.eval() == frozen);
}

TEST(AfterStep, TargetEqualsEvalRightAfterEachSync) {
  AgentConfig c;
  c.train_period = 10;
  Agent a(3, 2, c);
  std::mt19937_64 rng(10);
  for (int step = 1; step <= 900; ++step) {
    a.store_transition(tr(random_vec(rng, 3), step % 2, 0.5, random_vec(rng, 3)));
    a.after_step();
    EXPECT_LE(a.memory().size(), 500u);
    EXPECT_GE(a.epsilon(), 0.0);
    EXPECT_LE(a.epsilon(), 0.9);
    if (step % 300 == 0) {
      EXPECT_EQ(a.target(), a.eval()) << step;
    }
    if (step % 300 == 299) {
      EXPECT_FALSE(a.target() == a.eval()) << step;
    }
  }
  EXPECT_EQ(a.train_steps(), 90u);
}

TEST(Epsilon, Decay) {
  Agent a(2, 2, AgentConfig{});
  EXPECT_EQ(a.epsilon(), 0.9);
  a.decay_epsilon();
  EXPECT_NEAR(a.epsilon(), 0.85, 1e-12);
  Agent b(2, 2, AgentConfig{});
  for (int i = 0; i < 18; ++i) b.decay_epsilon();
  EXPECT_EQ(b.epsilon(), 0.0);
  b.decay_epsilon();
  EXPECT_EQ(b.epsilon(), 0.0);
  Agent c(2, 2, AgentConfig{});
  c.set_epsilon(0.03);
  c.decay_epsilon();
  EXPECT_EQ(c.epsilon(), 0.0);
  AgentConfig fl;
  fl.epsilon_floor = 0.1;
  Agent d(2, 2, fl);
  for (int i = 0; i < 30; ++i) d.decay_epsilon();
  EXPECT_NEAR(d.epsilon(), 0.1, 1e-12);
}

TEST(QUpdateReference, Examples) {
  EXPECT_NEAR(q_update_reference({{1.0}}, 0, 0, 3.0, 0, 0.1, 0.0), 1.2, 1e-9);
  EXPECT_NEAR(q_update_reference({{1.0}}, 0, 0, 1.0, 0, 0.1, 0.0), 1.0, 1e-9);
  EXPECT_NEAR(q_update_reference({{0.0}, {2.0, -1.0}}, 0, 0, 1.0, 1, 1.0, 0.9), 2.8, 1e-9);
}

TEST(AgentConfig, Validation) {
  AgentConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(Agent(2, 2, c), h2o::Error);
  c = {};
  c.discount = 1.5;
  EXPECT_THROW(Agent(2, 2, c), h2o::Error);
  c = {};
  c.target_sync_period = 0;
  EXPECT_THROW(Agent(2, 2, c), h2o::Error);
}
