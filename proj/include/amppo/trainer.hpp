#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "amppo/config.hpp"
#include "amppo/envs.hpp"
#include "amppo/modulation.hpp"
#include "amppo/numcore.hpp"
#include "amppo/rng.hpp"
#include "amppo/rollout.hpp"
#include "amppo/update.hpp"

namespace amppo {

/// Complete mutable state of a training run. Copying it snapshots the run.
///
/// Generator streams, all derived from config.seed:
///   "init"    parameter initialization (consumed once)
///   "env"     per-env reset seeds (consumed once)
///   "action"  policy action noise
///   "shuffle" minibatch permutations
struct TrainState {
  RunConfig config;
  ActorCritic ac;
  ControllerState ctrl;
  RolloutWorker worker;
  Rng action_rng;
  Rng shuffle_rng;
  std::size_t iteration = 0;  // completed iterations
  std::size_t global_step = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline TrainState init_train_state(const RunConfig& cfg) {
  validate(cfg);
  TrainState s;
  s.config = cfg;
  const PointMassEnv probe(cfg.env_id);
  Rng init = Rng::stream(cfg.seed, "init");
  s.ac = make_actor_critic(probe.obs_dim(), probe.act_dim(), cfg.hidden, init);
  s.ctrl = ControllerState::initial(cfg.modulation);
  Rng env_seeds = Rng::stream(cfg.seed, "env");
  s.worker = RolloutWorker(cfg.env_id, cfg.num_envs, env_seeds);
  s.action_rng = Rng::stream(cfg.seed, "action");
  s.shuffle_rng = Rng::stream(cfg.seed, "shuffle");
  return s;
}

/// Learning rate for 1-based iteration i: linear decay to zero when annealed.
inline double learning_rate_at(const RunConfig& cfg, std::size_t i) {
  if (!cfg.update.anneal_lr) return cfg.update.lr;
  const double frac = 1.0 - static_cast<double>(i - 1) /
                                static_cast<double>(cfg.num_iterations());
  return frac * cfg.update.lr;
}

/// collect -> GAE -> controller update (AM-PPO) -> optimization epochs.
inline MetricsRecord run_iteration(TrainState& s,
                                   const MinibatchObserver& observer = {}) {
  const RunConfig& cfg = s.config;
  const std::size_t i = s.iteration + 1;
  const double lr = learning_rate_at(cfg, i);

  const RolloutBuffer buf = collect(s.ac, s.worker, cfg.num_steps, s.action_rng);
  const AdvantageBatch adv = gae(buf, cfg.gamma, cfg.gae_lambda);

  double sat_current = 0.0;
  if (cfg.update.algo == Algo::AmPpo) {
    const auto step = update_controller_step(s.ctrl, adv.advantages_raw,
                                             cfg.modulation);
    s.ctrl = step.state;
    sat_current = step.sat_current;
  } else {
    // PPO leaves the controller alone; report the saturation the batch would
    // show at the current alpha.
    sat_current = saturation(
        scaled_advantages(adv.advantages_raw, s.ctrl.alpha_ema, cfg.modulation),
        cfg.modulation.tau);
  }

  MetricsRecord rec = run_update(s.ac, buf, adv, s.ctrl, cfg.update,
                                 cfg.modulation, lr, s.shuffle_rng, observer);
  s.iteration = i;
  s.global_step += buf.size();
  rec.iteration = i;
  rec.global_step = s.global_step;
  rec.sat_current = sat_current;
  rec.mean_episodic_return =
      buf.episode_returns.empty()
          ? std::numeric_limits<double>::quiet_NaN()
          : mean(buf.episode_returns);
  return rec;
}

inline bool finished(const TrainState& s) {
  return s.iteration >= s.config.num_iterations();
}

struct EvalSummary {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  // population standard deviation
  std::vector<double> returns;
};

/// Reset seed of evaluation episode k.
inline std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t k) {
  return mix_seed(seed ^ mix_seed(0xE7A1ULL + k));
}

/// Runs the deterministic policy (action = mean) for whole episodes.
inline EvalSummary evaluate(const ActorCritic& ac, EnvId env_id,
                            std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ConfigError("episodes: must be >= 1");
  EvalSummary out;
  out.episodes = episodes;
  for (std::size_t k = 0; k < episodes; ++k) {
    PointMassEnv env(env_id);
    auto obs = env.reset(eval_episode_seed(seed, k));
    double ret = 0.0;
    for (;;) {
      const auto r = env.step(policy_mean(ac, obs));
      ret += r.reward;
      if (r.done) break;
      obs = r.next_observation;
    }
    out.returns.push_back(ret);
  }
  out.mean_return = mean(out.returns);
  double ss = 0.0;
  for (double r : out.returns) ss += (r - out.mean_return) * (r - out.mean_return);
  out.std_return = std::sqrt(ss / static_cast<double>(episodes));
  return out;
}

}  // namespace amppo
