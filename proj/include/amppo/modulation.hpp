#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amppo/errors.hpp"

namespace amppo {

/// Advantage-modulation controller constants. Defaults are the published
/// AM-PPO settings.
struct ModulationConfig {
  double kappa = 2.0;       // shared scale for the target alpha and the gate
  double tau = 1.25;        // saturation threshold on |Z|
  double p_star = 0.10;     // target saturation fraction
  double eta = 0.3;         // saturation feedback exponent
  double rho_alpha = 0.1;   // EMA factor for alpha
  double rho_sat = 0.98;    // EMA factor for saturation
  double alpha_min = 1e-12;
  double alpha_max = 1e12;
  double eps = 1e-5;
  double alpha_init = 1.0;
  double sat_init = 0.10;

  friend bool operator==(const ModulationConfig&,
                         const ModulationConfig&) = default;
};

inline void validate(const ModulationConfig& c) {
  auto fail = [](const char* field, const char* why) {
    throw ConfigError(std::string(field) + ": " + why);
  };
  if (!(c.p_star > 0.0 && c.p_star < 1.0)) fail("p_star", "must lie in (0,1)");
  if (!(c.eta >= 0.0)) fail("eta", "must be >= 0");
  if (!(c.rho_alpha > 0.0 && c.rho_alpha <= 1.0))
    fail("rho_alpha", "must lie in (0,1]");
  if (!(c.rho_sat > 0.0 && c.rho_sat <= 1.0))
    fail("rho_sat", "must lie in (0,1]");
  if (!(c.alpha_min > 0.0)) fail("alpha_min", "must be > 0");
  if (!(c.alpha_max > c.alpha_min)) fail("alpha_max", "must exceed alpha_min");
  if (!(c.eps > 0.0)) fail("eps_a", "must be > 0");
  if (!(c.alpha_init >= c.alpha_min && c.alpha_init <= c.alpha_max))
    fail("alpha_init", "must lie in [alpha_min, alpha_max]");
  if (!(c.sat_init > 0.0 && c.sat_init < 1.0))
    fail("sat_init", "must lie in (0,1)");
  if (!std::isfinite(c.kappa)) fail("kappa", "must be finite");
  if (!std::isfinite(c.tau)) fail("tau", "must be finite");
}

/// Persistent controller state. frozen_alpha is the value every minibatch of
/// the current iteration is modulated with.
struct ControllerState {
  double alpha_ema = 1.0;
  double sat_ema = 0.10;
  double frozen_alpha = 1.0;

  static ControllerState initial(const ModulationConfig& c) {
    return {c.alpha_init, c.sat_init, c.alpha_init};
  }

  friend bool operator==(const ControllerState&,
                         const ControllerState&) = default;
};

inline double l2_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Bessel-corrected standard deviation; 0 for fewer than two samples.
inline double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Fraction of entries with |z| strictly above tau.
inline double saturation(std::span<const double> z, double tau) {
  if (z.empty()) throw ConfigError("saturation of empty batch");
  std::size_t n = 0;
  for (double v : z)
    if (std::abs(v) > tau) ++n;
  return static_cast<double>(n) / static_cast<double>(z.size());
}

/// Controller transition plus the intermediate quantities worth logging.
struct ControllerStep {
  ControllerState state;
  double alpha_target = 0.0;
  double sat_current = 0.0;
  bool degenerate = false;
};

/// Once-per-iteration update from the full batch of raw advantages.
/// A batch with norm below eps leaves the state untouched.
inline ControllerStep update_controller_step(const ControllerState& s,
                                             std::span<const double> a_raw,
                                             const ModulationConfig& c) {
  if (a_raw.empty()) throw ConfigError("controller update on empty batch");
  const double norm = l2_norm(a_raw);
  if (norm < c.eps) return {s, 0.0, 0.0, true};

  const double sigma = sample_std(a_raw) + c.eps;
  const double feedback = std::pow(c.p_star / (s.sat_ema + c.eps), c.eta);
  const double alpha_target = c.kappa * ((norm + c.eps) / sigma) * feedback;

  ControllerStep out;
  out.alpha_target = alpha_target;
  out.state.alpha_ema =
      std::clamp((1.0 - c.rho_alpha) * s.alpha_ema + c.rho_alpha * alpha_target,
                 c.alpha_min, c.alpha_max);

  std::size_t over = 0;
  for (double a : a_raw)
    if (std::abs(out.state.alpha_ema * a / (norm + c.eps)) > c.tau) ++over;
  out.sat_current =
      static_cast<double>(over) / static_cast<double>(a_raw.size());
  out.state.sat_ema =
      (1.0 - c.rho_sat) * s.sat_ema + c.rho_sat * out.sat_current;
  out.state.frozen_alpha = out.state.alpha_ema;
  return out;
}

inline ControllerState update_controller(const ControllerState& s,
                                         std::span<const double> a_raw,
                                         const ModulationConfig& c) {
  return update_controller_step(s, a_raw, c).state;
}

/// Z = alpha * a / (||a|| + eps); all zeros for a degenerate batch.
inline std::vector<double> scaled_advantages(std::span<const double> a_raw,
                                             double alpha,
                                             const ModulationConfig& c) {
  std::vector<double> z(a_raw.size(), 0.0);
  const double norm = l2_norm(a_raw);
  if (norm < c.eps) return z;
  for (std::size_t i = 0; i < a_raw.size(); ++i)
    z[i] = alpha * a_raw[i] / (norm + c.eps);
  return z;
}

/// |a| * kappa * tanh(Z) elementwise, using the frozen alpha. Degenerate
/// minibatches pass through unchanged.
inline std::vector<double> modulate_minibatch(std::span<const double> a_raw,
                                              double frozen_alpha,
                                              const ModulationConfig& c) {
  const double norm = l2_norm(a_raw);
  if (norm < c.eps) return {a_raw.begin(), a_raw.end()};
  std::vector<double> out(a_raw.size());
  for (std::size_t i = 0; i < a_raw.size(); ++i) {
    const double z = frozen_alpha * a_raw[i] / (norm + c.eps);
    out[i] = std::abs(a_raw[i]) * (c.kappa * std::tanh(z));
  }
  return out;
}

inline std::vector<double> value_targets(std::span<const double> a_mod,
                                         std::span<const double> old_values) {
  if (a_mod.size() != old_values.size())
    throw ConfigError("value_targets length mismatch");
  std::vector<double> t(a_mod.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = a_mod[i] + old_values[i];
  return t;
}

struct ModulatedBatch {
  std::vector<double> a_raw;
  std::vector<double> a_mod;
  std::vector<double> z;
  std::vector<double> value_targets;
  double alpha_used = 0.0;
};

inline ModulatedBatch modulate(std::span<const double> a_raw,
                               std::span<const double> old_values,
                               double frozen_alpha,
                               const ModulationConfig& c) {
  ModulatedBatch mb;
  mb.a_raw.assign(a_raw.begin(), a_raw.end());
  mb.a_mod = modulate_minibatch(a_raw, frozen_alpha, c);
  mb.z = scaled_advantages(a_raw, frozen_alpha, c);
  mb.value_targets = value_targets(mb.a_mod, old_values);
  mb.alpha_used = frozen_alpha;
  return mb;
}

}  // namespace amppo
