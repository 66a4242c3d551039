#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "amppo/envs.hpp"
#include "amppo/errors.hpp"
#include "amppo/numcore.hpp"
#include "amppo/rng.hpp"

namespace amppo {

/// One iteration of on-policy experience, stored time-major: the flat index
/// of (step t, env e) is t * n_envs + e.
struct RolloutBuffer {
  std::size_t n_steps = 0;
  std::size_t n_envs = 0;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;

  std::vector<double> observations;  // [n_steps][n_envs][obs_dim]
  std::vector<double> actions;       // [n_steps][n_envs][act_dim]
  std::vector<double> logprobs;      // [n_steps][n_envs]
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;   // 1 iff the episode ended after this step
  std::vector<double> values;
  std::vector<double> bootstrap_value;  // V(s_{n_steps}) per env

  // Returns of episodes that finished during collection, in completion order.
  std::vector<double> episode_returns;

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t steps, std::size_t envs, std::size_t od,
                std::size_t ad)
      : n_steps(steps), n_envs(envs), obs_dim(od), act_dim(ad),
        observations(steps * envs * od), actions(steps * envs * ad),
        logprobs(steps * envs), rewards(steps * envs), dones(steps * envs),
        values(steps * envs), bootstrap_value(envs) {}

  std::size_t size() const { return n_steps * n_envs; }
  std::size_t index(std::size_t t, std::size_t e) const {
    return t * n_envs + e;
  }

  std::span<const double> obs(std::size_t flat) const {
    return {observations.data() + flat * obs_dim, obs_dim};
  }
  std::span<double> obs(std::size_t flat) {
    return {observations.data() + flat * obs_dim, obs_dim};
  }
  std::span<const double> action(std::size_t flat) const {
    return {actions.data() + flat * act_dim, act_dim};
  }
  std::span<double> action(std::size_t flat) {
    return {actions.data() + flat * act_dim, act_dim};
  }

  friend bool operator==(const RolloutBuffer&, const RolloutBuffer&) = default;
};

/// Raw advantages and the value estimates they were computed against,
/// both in the buffer's flat order.
struct AdvantageBatch {
  std::vector<double> advantages_raw;
  std::vector<double> old_values;
};

/// Environments plus the running return of each one's current episode.
struct RolloutWorker {
  std::vector<PointMassEnv> envs;
  std::vector<double> running_return;

  RolloutWorker() = default;
  RolloutWorker(EnvId id, std::size_t n_envs, Rng& seeds) {
    for (std::size_t e = 0; e < n_envs; ++e) {
      envs.emplace_back(id);
      envs.back().reset(seeds.next_u64());
    }
    running_return.assign(n_envs, 0.0);
  }

  friend bool operator==(const RolloutWorker&, const RolloutWorker&) = default;
};

inline std::vector<double> policy_mean(const ActorCritic& ac,
                                       std::span<const double> obs,
                                       MlpTape* tape = nullptr) {
  return mlp_forward(ac.policy, obs, tape);
}

inline double state_value(const ActorCritic& ac, std::span<const double> obs,
                          MlpTape* tape = nullptr) {
  return mlp_forward(ac.value, obs, tape)[0];
}

/// Runs the stochastic policy for n_steps in every env. Envs auto-reset when
/// an episode ends, so the next step starts a new episode.
inline RolloutBuffer collect(const ActorCritic& ac, RolloutWorker& worker,
                             std::size_t n_steps, Rng& rng) {
  const std::size_t n_envs = worker.envs.size();
  if (n_envs == 0 || n_steps == 0) throw ConfigError("empty rollout");
  const std::size_t od = worker.envs[0].obs_dim();
  const std::size_t ad = worker.envs[0].act_dim();
  if (od != ac.obs_dim() || ad != ac.act_dim())
    throw ConfigError("network dimensions do not match environment");

  RolloutBuffer buf(n_steps, n_envs, od, ad);
  const auto& log_std = ac.log_std().value;
  std::vector<double> a(ad);
  for (std::size_t t = 0; t < n_steps; ++t) {
    for (std::size_t e = 0; e < n_envs; ++e) {
      auto& env = worker.envs[e];
      const std::size_t i = buf.index(t, e);
      const auto o = env.observation();
      for (double x : o)
        if (!std::isfinite(x)) throw NumericError("non-finite observation");
      std::copy(o.begin(), o.end(), buf.obs(i).begin());

      const auto mean = policy_mean(ac, o);
      for (std::size_t k = 0; k < ad; ++k) {
        a[k] = mean[k] + std::exp(log_std[k]) * rng.normal();
        if (!std::isfinite(a[k])) throw NumericError("non-finite action");
      }
      std::copy(a.begin(), a.end(), buf.action(i).begin());
      buf.logprobs[i] = gaussian_logprob(mean, log_std, a);
      buf.values[i] = state_value(ac, o);

      const auto r = env.step(a);
      buf.rewards[i] = r.reward;
      buf.dones[i] = r.done ? 1 : 0;
      worker.running_return[e] += r.reward;
      if (r.done) {
        buf.episode_returns.push_back(worker.running_return[e]);
        worker.running_return[e] = 0.0;
        env.reset();
      }
    }
  }
  for (std::size_t e = 0; e < n_envs; ++e)
    buf.bootstrap_value[e] = state_value(ac, worker.envs[e].observation());
  return buf;
}

/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - d_t) - V(s_t), flat order.
inline std::vector<double> td_errors(const RolloutBuffer& buf, double gamma) {
  std::vector<double> delta(buf.size());
  for (std::size_t t = 0; t < buf.n_steps; ++t) {
    for (std::size_t e = 0; e < buf.n_envs; ++e) {
      const std::size_t i = buf.index(t, e);
      const double next_v = (t + 1 < buf.n_steps)
                                ? buf.values[buf.index(t + 1, e)]
                                : buf.bootstrap_value[e];
      const double mask = buf.dones[i] ? 0.0 : 1.0;
      delta[i] = buf.rewards[i] + gamma * next_v * mask - buf.values[i];
    }
  }
  return delta;
}

/// Generalized advantage estimation by the backward recursion
/// A_t = delta_t + gamma * lambda * (1 - d_t) * A_{t+1}.
inline AdvantageBatch gae(const RolloutBuffer& buf, double gamma,
                          double lambda) {
  if (!(gamma >= 0.0 && gamma <= 1.0 && lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("gamma and lambda must lie in [0, 1]");
  const auto delta = td_errors(buf, gamma);
  AdvantageBatch out;
  out.advantages_raw.assign(buf.size(), 0.0);
  out.old_values = buf.values;
  for (std::size_t e = 0; e < buf.n_envs; ++e) {
    double next = 0.0;
    for (std::size_t t = buf.n_steps; t-- > 0;) {
      const std::size_t i = buf.index(t, e);
      const double mask = buf.dones[i] ? 0.0 : 1.0;
      next = delta[i] + gamma * lambda * mask * next;
      out.advantages_raw[i] = next;
    }
  }
  return out;
}

/// [n_steps][n_envs] view of a flat time-major array, and back.
inline std::vector<std::vector<double>> unflatten(std::span<const double> flat,
                                                  std::size_t n_steps,
                                                  std::size_t n_envs) {
  if (flat.size() != n_steps * n_envs) throw ConfigError("shape mismatch");
  std::vector<std::vector<double>> grid(n_steps, std::vector<double>(n_envs));
  for (std::size_t t = 0; t < n_steps; ++t)
    for (std::size_t e = 0; e < n_envs; ++e) grid[t][e] = flat[t * n_envs + e];
  return grid;
}

inline std::vector<double> flatten(
    const std::vector<std::vector<double>>& grid) {
  std::vector<double> flat;
  for (const auto& row : grid) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

}  // namespace amppo
