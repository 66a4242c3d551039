#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amppo/errors.hpp"
#include "amppo/modulation.hpp"
#include "amppo/numcore.hpp"
#include "amppo/rng.hpp"
#include "amppo/rollout.hpp"

namespace amppo {

enum class Algo { Ppo, AmPpo };

inline Algo parse_algo(std::string_view s) {
  if (s == "ppo") return Algo::Ppo;
  if (s == "am-ppo" || s == "am_ppo") return Algo::AmPpo;
  throw ConfigError("algo: unknown value '" + std::string(s) + "'");
}

inline std::string_view to_string(Algo a) {
  return a == Algo::Ppo ? "ppo" : "am-ppo";
}

struct UpdateConfig {
  double clip_eps = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  std::size_t n_epochs = 10;
  std::size_t n_minibatches = 32;
  bool norm_adv = true;
  bool clip_vloss = true;
  double max_grad_norm = 0.5;
  double lr = 3e-4;
  bool anneal_lr = true;
  Algo algo = Algo::AmPpo;

  friend bool operator==(const UpdateConfig&, const UpdateConfig&) = default;
};

/// One iteration's diagnostics, written as one metrics.jsonl line.
struct MetricsRecord {
  std::size_t iteration = 0;
  std::size_t global_step = 0;
  double mean_episodic_return = 0.0;  // NaN when no episode finished
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double alpha_ema = 0.0;
  double sat_ema = 0.0;
  double sat_current = 0.0;
  double ratio_clip_fraction = 0.0;
  double grad_norm_preclip = 0.0;
  double lr_current = 0.0;
};

/// (a - mean) / (sample_std + 1e-8). Fewer than two samples pass through.
inline std::vector<double> normalize_advantages(std::span<const double> a) {
  std::vector<double> out(a.begin(), a.end());
  if (a.size() < 2) return out;
  const double m = mean(a);
  const double s = sample_std(a) + 1e-8;
  for (double& x : out) x = (x - m) / s;
  return out;
}

struct PolicyLoss {
  double loss = 0.0;
  double clip_fraction = 0.0;
  double max_ratio_deviation = 0.0;
};

/// Negated clipped surrogate. If d_logp_new is non-empty it receives
/// d(loss)/d(logp_new).
inline PolicyLoss policy_loss(std::span<const double> logp_new,
                              std::span<const double> logp_old,
                              std::span<const double> adv, double clip_eps,
                              std::span<double> d_logp_new = {}) {
  const std::size_t m = logp_new.size();
  if (logp_old.size() != m || adv.size() != m)
    throw ConfigError("policy_loss length mismatch");
  PolicyLoss out;
  double surrogate = 0.0;
  std::size_t clipped = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double r = std::exp(logp_new[j] - logp_old[j]);
    if (!std::isfinite(r)) throw NumericError("non-finite probability ratio");
    const double rc = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped = r * adv[j];
    const double clipped_term = rc * adv[j];
    surrogate += std::min(unclipped, clipped_term);
    if (std::abs(r - 1.0) > clip_eps) ++clipped;
    out.max_ratio_deviation = std::max(out.max_ratio_deviation, std::abs(r - 1.0));
    if (!d_logp_new.empty()) {
      // d/dr of the min is adv where the unclipped branch is active; within
      // the clip range the two branches coincide.
      const bool active = unclipped <= clipped_term || r == rc;
      d_logp_new[j] = active ? -adv[j] * r / static_cast<double>(m) : 0.0;
    }
  }
  out.loss = -surrogate / static_cast<double>(m);
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(m);
  return out;
}

/// 0.5 * mean squared error, optionally the pessimistic max over the
/// unclipped and clipped predictions. d_v_new receives d(loss)/d(v_new).
inline double value_loss(std::span<const double> v_new,
                         std::span<const double> v_old,
                         std::span<const double> v_target, double clip_eps,
                         bool clip_vloss, std::span<double> d_v_new = {}) {
  const std::size_t m = v_new.size();
  if (v_old.size() != m || v_target.size() != m)
    throw ConfigError("value_loss length mismatch");
  const double scale = 0.5 / static_cast<double>(m);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double u = v_new[j] - v_target[j];
    if (!clip_vloss) {
      sum += u * u;
      if (!d_v_new.empty()) d_v_new[j] = 2.0 * u * scale;
      continue;
    }
    const double diff = v_new[j] - v_old[j];
    const double diff_c = std::clamp(diff, -clip_eps, clip_eps);
    const double c = v_old[j] + diff_c - v_target[j];
    if (u * u >= c * c) {
      sum += u * u;
      if (!d_v_new.empty()) d_v_new[j] = 2.0 * u * scale;
    } else {
      sum += c * c;
      if (!d_v_new.empty())
        d_v_new[j] = (diff == diff_c) ? 2.0 * c * scale : 0.0;
    }
  }
  return sum * scale;
}

struct LossParts {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean policy entropy (not the loss term)
  double clip_fraction = 0.0;
  double max_ratio_deviation = 0.0;
};

/// Total loss  policy + vf_coef * value - ent_coef * entropy  over the samples
/// `idx` of `buf`. `adv` and `targets` are aligned with `idx`. With
/// `backprop`, gradients are accumulated into ac (the caller zeroes them).
inline LossParts minibatch_loss(ActorCritic& ac, const RolloutBuffer& buf,
                                std::span<const std::size_t> idx,
                                std::span<const double> adv,
                                std::span<const double> v_old,
                                std::span<const double> targets,
                                const UpdateConfig& cfg, bool backprop) {
  const std::size_t m = idx.size();
  const std::size_t ad = buf.act_dim;
  const auto& log_std = ac.log_std().value;

  std::vector<MlpTape> pol_tapes(backprop ? m : 0), val_tapes(backprop ? m : 0);
  std::vector<std::vector<double>> means(m);
  std::vector<double> logp_new(m), logp_old(m), v_new(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto obs = buf.obs(idx[j]);
    means[j] = mlp_forward(ac.policy, obs, backprop ? &pol_tapes[j] : nullptr);
    logp_new[j] = gaussian_logprob(means[j], log_std, buf.action(idx[j]));
    logp_old[j] = buf.logprobs[idx[j]];
    v_new[j] = mlp_forward(ac.value, obs, backprop ? &val_tapes[j] : nullptr)[0];
  }

  std::vector<double> d_logp(backprop ? m : 0), d_v(backprop ? m : 0);
  const auto pl = policy_loss(logp_new, logp_old, adv, cfg.clip_eps, d_logp);
  const double vl =
      value_loss(v_new, v_old, targets, cfg.clip_eps, cfg.clip_vloss, d_v);
  const double ent = gaussian_entropy(log_std);

  LossParts out;
  out.policy = pl.loss;
  out.value = vl;
  out.entropy = ent;
  out.clip_fraction = pl.clip_fraction;
  out.max_ratio_deviation = pl.max_ratio_deviation;
  out.total = pl.loss + cfg.vf_coef * vl - cfg.ent_coef * ent;
  if (!std::isfinite(out.total)) throw NumericError("non-finite loss");

  if (backprop) {
    auto& g_log_std = ac.log_std().grad;
    std::vector<double> d_mean(ad), d_ls(ad);
    for (std::size_t j = 0; j < m; ++j) {
      gaussian_logprob_grad(means[j], log_std, buf.action(idx[j]), d_mean,
                            d_ls);
      for (std::size_t k = 0; k < ad; ++k) {
        d_mean[k] *= d_logp[j];
        g_log_std[k] += d_logp[j] * d_ls[k];
      }
      mlp_backward(ac.policy, pol_tapes[j], d_mean);
      const double dv = cfg.vf_coef * d_v[j];
      mlp_backward(ac.value, val_tapes[j], std::span<const double>(&dv, 1));
    }
    for (std::size_t k = 0; k < ad; ++k) g_log_std[k] -= cfg.ent_coef;
  }
  return out;
}

/// What one minibatch step saw; handed to an optional observer.
struct MinibatchTrace {
  std::size_t epoch = 0;
  std::size_t minibatch = 0;
  std::vector<std::size_t> indices;
  std::vector<double> a_mod;    // modulated (or raw, for PPO) advantages
  std::vector<double> targets;  // value targets, built before normalization
  std::vector<double> adv_hat;  // advantages fed to the policy loss
  LossParts loss;
};

using MinibatchObserver = std::function<void(const MinibatchTrace&)>;

inline void validate(const UpdateConfig& c, std::size_t batch_size) {
  auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(std::string(field) + ": " + why);
  };
  if (c.n_epochs == 0) fail("update_epochs", "must be >= 1");
  if (c.n_minibatches == 0) fail("num_minibatches", "must be >= 1");
  if (batch_size % c.n_minibatches != 0)
    fail("num_minibatches", "must divide the batch size " +
                                std::to_string(batch_size));
  if (!(c.clip_eps > 0.0)) fail("clip_coef", "must be > 0");
  if (!(c.max_grad_norm > 0.0)) fail("max_grad_norm", "must be > 0");
  if (!(c.lr >= 0.0)) fail("learning_rate", "must be >= 0");
  if (!(c.vf_coef >= 0.0)) fail("vf_coef", "must be >= 0");
  if (!std::isfinite(c.ent_coef)) fail("ent_coef", "must be finite");
}

/// Epochs of shuffled minibatch updates for one iteration.
///
/// For AM-PPO each minibatch's raw advantages are modulated with
/// ctrl.frozen_alpha; for PPO they pass through unchanged. Value targets are
/// formed from those advantages before optional normalization. Losses and the
/// pre-clip gradient norm are reported for the last minibatch, the clip
/// fraction averaged over all minibatches.
inline MetricsRecord run_update(ActorCritic& ac, const RolloutBuffer& buf,
                                const AdvantageBatch& adv,
                                const ControllerState& ctrl,
                                const UpdateConfig& cfg,
                                const ModulationConfig& mcfg, double lr,
                                Rng& shuffle_rng,
                                const MinibatchObserver& observer = {}) {
  const std::size_t n = buf.size();
  validate(cfg, n);
  const std::size_t mb_size = n / cfg.n_minibatches;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  MetricsRecord rec;
  rec.alpha_ema = ctrl.alpha_ema;
  rec.sat_ema = ctrl.sat_ema;
  rec.lr_current = lr;
  double clip_sum = 0.0;
  std::size_t n_mb = 0;

  ParamSet* sets[] = {&ac.policy, &ac.value};
  std::vector<double> a_raw(mb_size), v_old(mb_size);
  for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t b = 0; b < cfg.n_minibatches; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * mb_size,
                                             mb_size);
      for (std::size_t j = 0; j < mb_size; ++j) {
        a_raw[j] = adv.advantages_raw[idx[j]];
        v_old[j] = adv.old_values[idx[j]];
      }
      std::vector<double> a_mod =
          cfg.algo == Algo::AmPpo
              ? modulate_minibatch(a_raw, ctrl.frozen_alpha, mcfg)
              : a_raw;
      std::vector<double> targets = value_targets(a_mod, v_old);
      std::vector<double> adv_hat =
          cfg.norm_adv ? normalize_advantages(a_mod) : a_mod;

      ac.policy.zero_grad();
      ac.value.zero_grad();
      const auto loss =
          minibatch_loss(ac, buf, idx, adv_hat, v_old, targets, cfg, true);
      const double gnorm = clip_global_grad_norm(sets, cfg.max_grad_norm);
      adam_step(ac.policy, lr);
      adam_step(ac.value, lr);

      clip_sum += loss.clip_fraction;
      ++n_mb;
      rec.policy_loss = loss.policy;
      rec.value_loss = loss.value;
      rec.entropy = loss.entropy;
      rec.grad_norm_preclip = gnorm;

      if (observer) {
        observer(MinibatchTrace{epoch, b, {idx.begin(), idx.end()},
                                std::move(a_mod), std::move(targets),
                                std::move(adv_hat), loss});
      }
    }
  }
  rec.ratio_clip_fraction = clip_sum / static_cast<double>(n_mb);
  return rec;
}

}  // namespace amppo
