#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "amppo/update.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace amppo;

namespace {

// A small batch collected from the 1d point mass by a fresh agent.
struct Batch {
  ActorCritic ac;
  RolloutBuffer buf;
  AdvantageBatch adv;
};

Batch collected_batch(std::uint64_t seed, std::size_t n_steps = 64) {
  Rng init(seed), seeds(seed + 1), rng(seed + 2);
  Batch b;
  b.ac = make_actor_critic(2, 1, 8, init);
  RolloutWorker w(EnvId::PointMass1d, 1, seeds);
  b.buf = collect(b.ac, w, n_steps, rng);
  b.adv = gae(b.buf, 0.99, 0.95);
  return b;
}

}  // namespace

TEST(NormalizeAdvantages, Examples) {
  for (double x : normalize_advantages(std::vector<double>{1, 1, 1, 1})) EXPECT_EQ(x, 0.0);
  const auto pm = normalize_advantages(std::vector<double>{-1, 1});
  EXPECT_NEAR(pm[0], -0.7071067761865475, 1e-15);
  EXPECT_NEAR(pm[1], 0.7071067761865475, 1e-15);
  EXPECT_EQ(normalize_advantages(std::vector<double>{3.0}), std::vector<double>{3.0});
}

TEST(NormalizeAdvantages, ZeroMeanUnitStd) {
  std::mt19937_64 g(41);
  const auto a = oracle::uni_vec(g, 500, -7, 3);
  const auto n = normalize_advantages(a);
  EXPECT_NEAR(mean(n), 0.0, 1e-12);
  EXPECT_NEAR(sample_std(n), 1.0, 1e-7);
}

TEST(PolicyLoss, IdenticalPolicies) {
  const std::vector<double> lp{-1.0, -0.5, -2.0}, adv{1.0, -2.0, 0.5};
  const auto pl = policy_loss(lp, lp, adv, 0.2);
  EXPECT_NEAR(pl.loss, 0.5 / 3.0, 1e-15);
  EXPECT_EQ(pl.clip_fraction, 0.0);
  EXPECT_EQ(pl.max_ratio_deviation, 0.0);
}

TEST(PolicyLoss, ClippedPositiveAdvantage) {
  const std::vector<double> lp_new{std::log(2.0)}, lp_old{0.0}, adv{1.0};
  std::vector<double> d(1);
  const auto pl = policy_loss(lp_new, lp_old, adv, 0.2, d);
  EXPECT_NEAR(pl.loss, -1.2, 1e-15);
  EXPECT_EQ(pl.clip_fraction, 1.0);
  EXPECT_EQ(d[0], 0.0);
}

TEST(PolicyLoss, MatchesSurrogateOracle) {
  std::mt19937_64 g(42);
  for (int trial = 0; trial < 100; ++trial) {
    const auto lo = oracle::uni_vec(g, 32, -3, 0);
    auto ln = lo;
    for (double& x : ln) x += oracle::uni(g, -0.5, 0.5);
    const auto adv = oracle::uni_vec(g, 32, -2, 2);
    const auto pl = policy_loss(ln, lo, adv, 0.2);
    EXPECT_NEAR(pl.loss, -oracle::clipped_surrogate(ln, lo, adv, 0.2), 1e-14);
  }
}

TEST(PolicyLoss, NonFiniteRatioIsNumericError) {
  const std::vector<double> lp_new{800.0}, lp_old{0.0}, adv{1.0};
  EXPECT_THROW(policy_loss(lp_new, lp_old, adv, 0.2), NumericError);
}

TEST(ValueLoss, Examples) {
  const std::vector<double> v{1.0, 2.0};
  EXPECT_EQ(value_loss(v, v, v, 0.2, true), 0.0);
  EXPECT_EQ(value_loss(std::vector<double>{1.0}, std::vector<double>{1.0},
                       std::vector<double>{2.0}, 0.2, false),
            0.5);
}

TEST(ValueLoss, MatchesOracle) {
  std::mt19937_64 g(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = oracle::uni_vec(g, 32, -2, 2), vo = oracle::uni_vec(g, 32, -2, 2);
    const auto t = oracle::uni_vec(g, 32, -2, 2);
    EXPECT_NEAR(value_loss(v, vo, t, 0.2, true), 0.5 * oracle::clipped_value_error(v, vo, t, 0.2), 1e-14);
    double mse = 0;
    for (std::size_t j = 0; j < 32; ++j) mse += (v[j] - t[j]) * (v[j] - t[j]);
    EXPECT_NEAR(value_loss(v, vo, t, 0.2, false), 0.5 * mse / 32, 1e-14);
  }
}

TEST(MinibatchLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 g(44);
  for (int trial = 0; trial < 10; ++trial)
    EXPECT_LE(scenario::total_loss_gradient_error(g), 1e-4);
}

TEST(MinibatchLoss, ZeroEntropyCoefficientAddsNothing) {
  std::mt19937_64 g(45);
  auto p = scenario::random_loss_problem(g);
  p.cfg.ent_coef = 0.0;
  auto grads = [&](double ent) {
    auto ac = p.ac;
    p.cfg.ent_coef = ent;
    ac.policy.zero_grad();
    ac.value.zero_grad();
    minibatch_loss(ac, p.buf, p.idx, p.adv, p.v_old, p.targets, p.cfg, true);
    return ac;
  };
  const auto zero = grads(0.0);
  const auto some = grads(0.25);
  EXPECT_EQ(oracle::grads_of(zero.value), oracle::grads_of(some.value));
  for (std::size_t i = 0; i + 1 < zero.policy.params.size(); ++i)
    EXPECT_EQ(zero.policy.params[i].grad, some.policy.params[i].grad);
  for (std::size_t k = 0; k < zero.act_dim(); ++k)
    EXPECT_NEAR(zero.log_std().grad[k] - some.log_std().grad[k], 0.25, 1e-15);
}

TEST(MinibatchLoss, ZeroAdvantagesGiveNoPolicyMeanGradient) {
  std::mt19937_64 g(46);
  auto p = scenario::random_loss_problem(g);
  std::fill(p.adv.begin(), p.adv.end(), 0.0);
  p.ac.policy.zero_grad();
  p.ac.value.zero_grad();
  minibatch_loss(p.ac, p.buf, p.idx, p.adv, p.v_old, p.targets, p.cfg, true);
  for (const auto& prm : p.ac.policy.params) {
    if (prm.name == "log_std") continue;
    for (double x : prm.grad) EXPECT_EQ(x, 0.0);
  }
}

TEST(RunUpdate, ZeroLearningRateLeavesParameters) {
  auto b = collected_batch(1);
  const auto before = b.ac;
  UpdateConfig cfg;
  cfg.n_epochs = 1;
  cfg.n_minibatches = 1;
  Rng shuffle(3);
  const auto rec = run_update(b.ac, b.buf, b.adv, ControllerState{}, cfg, ModulationConfig{}, 0.0, shuffle);
  EXPECT_EQ(oracle::values_of(b.ac.policy), oracle::values_of(before.policy));
  EXPECT_EQ(oracle::values_of(b.ac.value), oracle::values_of(before.value));
  EXPECT_TRUE(std::isfinite(rec.policy_loss));
  EXPECT_TRUE(std::isfinite(rec.value_loss));
}

TEST(RunUpdate, FirstMinibatchRatiosAreOne) {
  for (auto algo : {Algo::Ppo, Algo::AmPpo}) {
    auto b = collected_batch(2);
    UpdateConfig cfg;
    cfg.algo = algo;
    cfg.n_epochs = 2;
    cfg.n_minibatches = 4;
    Rng shuffle(4);
    bool seen = false;
    run_update(b.ac, b.buf, b.adv, ControllerState{}, cfg, ModulationConfig{}, 1e-3, shuffle,
               [&](const MinibatchTrace& t) {
                 if (t.epoch != 0 || t.minibatch != 0) return;
                 seen = true;
                 EXPECT_EQ(t.loss.clip_fraction, 0.0);
                 EXPECT_LE(t.loss.max_ratio_deviation, 1e-12);
               });
    EXPECT_TRUE(seen);
  }
}

TEST(RunUpdate, TargetsUseModulatedAdvantagesBeforeNormalization) {
  auto b = collected_batch(3);
  UpdateConfig cfg;
  cfg.n_epochs = 2;
  cfg.n_minibatches = 4;
  const ModulationConfig mc;
  const ControllerState ctrl = update_controller(ControllerState::initial(mc), b.adv.advantages_raw, mc);
  Rng shuffle(5);
  std::size_t count = 0;
  run_update(b.ac, b.buf, b.adv, ctrl, cfg, mc, 1e-3, shuffle, [&](const MinibatchTrace& t) {
    ++count;
    oracle::Vec raw, v_old;
    for (std::size_t i : t.indices) {
      raw.push_back(b.adv.advantages_raw[i]);
      v_old.push_back(b.adv.old_values[i]);
    }
    const auto gate = oracle::gate(raw, ctrl.frozen_alpha, mc);
    for (std::size_t j = 0; j < raw.size(); ++j) {
      EXPECT_NEAR(t.a_mod[j], gate[j], 1e-14 * std::max(1.0, std::fabs(gate[j])));
      EXPECT_EQ(t.targets[j], t.a_mod[j] + v_old[j]);
    }
    EXPECT_EQ(t.adv_hat, normalize_advantages(t.a_mod));
  });
  EXPECT_EQ(count, 8u);
}

TEST(RunUpdate, PpoPassesRawAdvantages) {
  auto b = collected_batch(4);
  UpdateConfig cfg;
  cfg.algo = Algo::Ppo;
  cfg.n_epochs = 1;
  cfg.n_minibatches = 2;
  cfg.norm_adv = false;
  Rng shuffle(6);
  run_update(b.ac, b.buf, b.adv, ControllerState{}, cfg, ModulationConfig{}, 1e-3, shuffle,
             [&](const MinibatchTrace& t) {
               for (std::size_t j = 0; j < t.indices.size(); ++j) {
                 EXPECT_EQ(t.a_mod[j], b.adv.advantages_raw[t.indices[j]]);
                 EXPECT_EQ(t.adv_hat[j], t.a_mod[j]);
               }
             });
}

TEST(RunUpdate, AmPpoLossEqualsPpoLossOnGatedAdvantages) {
  // The first minibatch of an AM-PPO update must see exactly the loss of a
  // PPO loss evaluated on independently gated advantages.
  auto b = collected_batch(5);
  const auto ac0 = b.ac;
  UpdateConfig cfg;
  cfg.n_epochs = 1;
  cfg.n_minibatches = 4;
  const ModulationConfig mc;
  const ControllerState ctrl{0.3, 0.1, 0.3};
  Rng shuffle(7);
  LossParts first;
  std::vector<std::size_t> idx;
  run_update(b.ac, b.buf, b.adv, ctrl, cfg, mc, 1e-3, shuffle, [&](const MinibatchTrace& t) {
    if (t.minibatch == 0) {
      first = t.loss;
      idx = t.indices;
    }
  });
  oracle::Vec raw, v_old;
  for (std::size_t i : idx) {
    raw.push_back(b.adv.advantages_raw[i]);
    v_old.push_back(b.adv.old_values[i]);
  }
  const auto gated = oracle::gate(raw, 0.3, mc);
  oracle::Vec targets(gated.size());
  for (std::size_t j = 0; j < gated.size(); ++j) targets[j] = gated[j] + v_old[j];
  auto ac = ac0;
  const auto ref = minibatch_loss(ac, b.buf, idx, normalize_advantages(gated), v_old, targets, cfg, false);
  EXPECT_NEAR(first.policy, ref.policy, 1e-12);
  EXPECT_NEAR(first.value, ref.value, 1e-12);
}

TEST(RunUpdate, MatchesScalarPpoReference) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    EXPECT_LE(scenario::ppo_vs_scalar_reference(seed), 1e-10) << "seed " << seed;
}

TEST(RunUpdate, NonDividingMinibatchCountIsConfigError) {
  auto b = collected_batch(6);
  UpdateConfig cfg;
  cfg.n_minibatches = 5;
  Rng shuffle(1);
  try {
    run_update(b.ac, b.buf, b.adv, ControllerState{}, cfg, ModulationConfig{}, 1e-3, shuffle);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("num_minibatches"), std::string::npos);
  }
}

TEST(RunUpdate, ParseAlgo) {
  EXPECT_EQ(parse_algo("ppo"), Algo::Ppo);
  EXPECT_EQ(parse_algo("am-ppo"), Algo::AmPpo);
  EXPECT_THROW(parse_algo("trpo"), ConfigError);
}
