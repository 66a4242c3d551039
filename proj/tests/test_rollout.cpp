#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "amppo/rollout.hpp"
#include "oracles.hpp"

using namespace amppo;

namespace {

ActorCritic tiny_agent(std::uint64_t seed, EnvId id = EnvId::PointMass1d) {
  Rng rng(seed);
  const PointMassEnv probe(id);
  return make_actor_critic(probe.obs_dim(), probe.act_dim(), 8, rng);
}

}  // namespace

TEST(Collect, NearDeterministicPolicyMatchesZeroActionRollout) {
  auto ac = tiny_agent(1);
  for (auto& p : ac.policy.params) std::fill(p.value.begin(), p.value.end(), 0.0);
  std::fill(ac.log_std().value.begin(), ac.log_std().value.end(), -20.0);
  Rng seeds(5);
  RolloutWorker w(EnvId::PointMass1d, 1, seeds);
  const auto start = w.envs[0].observation();
  Rng rng(6);
  const auto buf = collect(ac, w, 50, rng);

  oracle::PointMass ref{{start[0]}, {start[1]}};
  for (std::size_t t = 0; t < 50; ++t) {
    EXPECT_NEAR(buf.actions[t], 0.0, 1e-7);
    EXPECT_NEAR(buf.rewards[t], ref.step({0.0}), 1e-7);
  }
}

TEST(Collect, DeterministicGivenSeedsAndParams) {
  const auto ac = tiny_agent(2, EnvId::PointMass2d);
  auto run = [&] {
    Rng seeds(7), rng(8);
    RolloutWorker w(EnvId::PointMass2d, 3, seeds);
    return collect(ac, w, 300, rng);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.episode_returns.size(), 3u);
}

TEST(Collect, RewardsReplayThroughEnvOracle) {
  const auto ac = tiny_agent(3);
  Rng seeds(9), rng(10);
  RolloutWorker w(EnvId::PointMass1d, 1, seeds);
  const auto start = w.envs[0].observation();
  const auto buf = collect(ac, w, 5, rng);
  oracle::PointMass ref{{start[0]}, {start[1]}};
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(buf.obs(t)[0], ref.pos[0]);
    EXPECT_EQ(buf.obs(t)[1], ref.vel[0]);
    EXPECT_EQ(buf.rewards[t], ref.step({buf.actions[t]}));
  }
}

TEST(Collect, LogProbsMatchCollectionTimeParameters) {
  const auto ac = tiny_agent(4, EnvId::PointMass2d);
  Rng seeds(1), rng(2);
  RolloutWorker w(EnvId::PointMass2d, 2, seeds);
  const auto buf = collect(ac, w, 64, rng);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const auto mean = mlp_forward(ac.policy, buf.obs(i));
    EXPECT_NEAR(buf.logprobs[i], gaussian_logprob(mean, ac.log_std().value, buf.action(i)), 1e-12);
    EXPECT_EQ(buf.values[i], mlp_forward(ac.value, buf.obs(i))[0]);
  }
  for (std::size_t e = 0; e < 2; ++e)
    EXPECT_EQ(buf.bootstrap_value[e], mlp_forward(ac.value, w.envs[e].observation())[0]);
}

TEST(Collect, AutoResetMarksDoneAtHorizon) {
  const auto ac = tiny_agent(5);
  Rng seeds(3), rng(4);
  RolloutWorker w(EnvId::PointMass1d, 2, seeds);
  const auto buf = collect(ac, w, 450, rng);
  for (std::size_t t = 0; t < 450; ++t)
    for (std::size_t e = 0; e < 2; ++e)
      EXPECT_EQ(buf.dones[buf.index(t, e)], (t + 1) % 200 == 0 ? 1 : 0);
  // After a done, the next observation is a fresh reset (zero velocity).
  EXPECT_EQ(buf.obs(buf.index(200, 0))[1], 0.0);
  EXPECT_EQ(buf.episode_returns.size(), 4u);
}

TEST(TdErrors, ZeroRewardsZeroValues) {
  RolloutBuffer b(4, 2, 2, 1);
  for (double d : td_errors(b, 0.99)) EXPECT_EQ(d, 0.0);
}

TEST(TdErrors, OneStepHandComputation) {
  RolloutBuffer b(1, 1, 2, 1);
  b.rewards = {1.0};
  b.values = {0.0};
  b.bootstrap_value = {2.0};
  EXPECT_NEAR(td_errors(b, 0.99)[0], 2.98, 1e-15);
}

TEST(TdErrors, MatchesFormulaOracle) {
  std::mt19937_64 g(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = oracle::random_buffer(g, 6, 2, 0.3);
    const auto d = td_errors(b, 0.97);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t e = 0; e < 2; ++e)
        EXPECT_EQ(d[b.index(t, e)], oracle::td_at(b, t, e, 0.97));
  }
}

TEST(Gae, LambdaZeroEqualsTdErrors) {
  std::mt19937_64 g(22);
  const auto b = oracle::random_buffer(g, 10, 3, 0.2);
  EXPECT_EQ(gae(b, 0.99, 0.0).advantages_raw, td_errors(b, 0.99));
}

TEST(Gae, ZeroTdErrorsGiveZeroAdvantages) {
  RolloutBuffer b(8, 2, 2, 1);
  for (double a : gae(b, 0.99, 0.95).advantages_raw) EXPECT_EQ(a, 0.0);
}

TEST(Gae, MatchesDoubleSumWithMidRolloutDone) {
  std::mt19937_64 g(23);
  auto b = oracle::random_buffer(g, 8, 2, 0.0);
  b.dones[b.index(3, 0)] = 1;
  b.dones[b.index(5, 1)] = 1;
  const auto a = gae(b, 0.99, 0.95);
  const auto ref = oracle::gae_double_sum(b, 0.99, 0.95);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(a.advantages_raw[i], ref[i], 1e-10);
  EXPECT_EQ(a.old_values, b.values);
}

TEST(Gae, LambdaOneRecoversBootstrappedMonteCarloReturn) {
  std::mt19937_64 g(24);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + g() % 32;
    const auto b = oracle::random_buffer(g, T, 2, 0.0);
    const double gamma = oracle::uni(g, 0.8, 1.0);
    const auto a = gae(b, gamma, 1.0);
    for (std::size_t e = 0; e < 2; ++e) {
      for (std::size_t t = 0; t < T; ++t) {
        double ret = 0.0, disc = 1.0;
        for (std::size_t k = t; k < T; ++k) {
          ret += disc * b.rewards[b.index(k, e)];
          disc *= gamma;
        }
        ret += disc * b.bootstrap_value[e];
        EXPECT_NEAR(a.advantages_raw[b.index(t, e)] + b.values[b.index(t, e)], ret, 1e-10);
      }
    }
  }
}

TEST(Gae, RejectsOutOfRangeCoefficients) {
  RolloutBuffer b(2, 1, 2, 1);
  EXPECT_THROW(gae(b, 1.1, 0.9), ConfigError);
  EXPECT_THROW(gae(b, 0.9, -0.1), ConfigError);
}

TEST(Flatten, RoundTripsTimeMajor) {
  std::mt19937_64 g(25);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 1 + g() % 9, E = 1 + g() % 4;
    const auto flat = oracle::uni_vec(g, T * E, -1, 1);
    const auto grid = unflatten(flat, T, E);
    EXPECT_EQ(flatten(grid), flat);
    EXPECT_EQ(grid[T - 1][E - 1], flat.back());
  }
}
