#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "amppo/errors.hpp"
#include "amppo/rng.hpp"

namespace amppo {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// One trainable tensor (row-major rows x cols) with its gradient and
/// optimizer moment slots.
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0),
        grad(r * c, 0.0), m(r * c, 0.0), v(r * c, 0.0) {}

  std::size_t size() const { return value.size(); }

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Flat, ordered collection of parameters.
///
/// The first `mlp_layers` (weight, bias) pairs form a dense network; any
/// parameters after them (the policy's log_std) are free vectors. `step`
/// counts optimizer updates for bias correction.
struct ParamSet {
  std::vector<Parameter> params;
  std::size_t mlp_layers = 0;
  std::int64_t step = 0;

  Parameter& add(std::string name, std::size_t rows, std::size_t cols = 1) {
    params.emplace_back(std::move(name), rows, cols);
    return params.back();
  }

  Parameter& operator[](std::size_t i) { return params[i]; }
  const Parameter& operator[](std::size_t i) const { return params[i]; }
  std::size_t size() const { return params.size(); }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

// ---------------------------------------------------------------------------
// Dense network: tanh hidden layers, linear output.

/// Appends the layers of an MLP with the given layer widths
/// (sizes = {in, hidden..., out}). Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// the final layer additionally scaled by `out_scale`; biases zero.
inline void add_mlp(ParamSet& ps, std::span<const std::size_t> sizes,
                    Rng& rng, double out_scale = 1.0) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least two layer sizes");
  if (ps.mlp_layers != ps.size())
    throw ConfigError("mlp layers must precede other parameters");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    if (in == 0 || out == 0) throw ConfigError("mlp layer size must be > 0");
    const double bound = (l + 2 == sizes.size() ? out_scale : 1.0) /
                         std::sqrt(static_cast<double>(in));
    auto& w = ps.add("layer" + std::to_string(l) + ".weight", out, in);
    for (auto& x : w.value) x = rng.uniform(-bound, bound);
    ps.add("layer" + std::to_string(l) + ".bias", out);
    ++ps.mlp_layers;
  }
}

/// Activations kept by mlp_forward for the reverse pass.
/// activations[0] is the input, activations[l+1] the output of layer l.
struct MlpTape {
  std::vector<std::vector<double>> activations;
};

inline std::size_t mlp_input_dim(const ParamSet& ps) { return ps[0].cols; }
inline std::size_t mlp_output_dim(const ParamSet& ps) {
  return ps[2 * ps.mlp_layers - 2].rows;
}

inline std::vector<double> mlp_forward(const ParamSet& ps,
                                       std::span<const double> input,
                                       MlpTape* tape = nullptr) {
  if (ps.mlp_layers == 0) throw ConfigError("parameter set has no mlp layers");
  if (input.size() != mlp_input_dim(ps))
    throw ConfigError("mlp input dimension " + std::to_string(input.size()) +
                      " != " + std::to_string(mlp_input_dim(ps)));
  std::vector<double> x(input.begin(), input.end());
  if (tape) {
    tape->activations.resize(ps.mlp_layers + 1);
    tape->activations[0] = x;
  }
  for (std::size_t l = 0; l < ps.mlp_layers; ++l) {
    const auto& w = ps[2 * l];
    const auto& b = ps[2 * l + 1];
    std::vector<double> y(w.rows);
    for (std::size_t o = 0; o < w.rows; ++o) {
      double acc = b.value[o];
      const double* row = &w.value[o * w.cols];
      for (std::size_t i = 0; i < w.cols; ++i) acc += row[i] * x[i];
      y[o] = (l + 1 < ps.mlp_layers) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
    if (tape) tape->activations[l + 1] = x;
  }
  return x;
}

/// Accumulates d(loss)/d(params) into ps.grad given d(loss)/d(output).
inline void mlp_backward(ParamSet& ps, const MlpTape& tape,
                         std::span<const double> grad_out) {
  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (std::size_t l = ps.mlp_layers; l-- > 0;) {
    auto& w = ps[2 * l];
    auto& b = ps[2 * l + 1];
    const auto& in = tape.activations[l];
    if (l + 1 < ps.mlp_layers) {
      const auto& out = tape.activations[l + 1];
      for (std::size_t o = 0; o < w.rows; ++o) g[o] *= 1.0 - out[o] * out[o];
    }
    std::vector<double> g_in(l > 0 ? w.cols : 0, 0.0);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      b.grad[o] += go;
      double* grow = &w.grad[o * w.cols];
      const double* wrow = &w.value[o * w.cols];
      for (std::size_t i = 0; i < w.cols; ++i) grow[i] += go * in[i];
      if (l > 0)
        for (std::size_t i = 0; i < w.cols; ++i) g_in[i] += go * wrow[i];
    }
    g = std::move(g_in);
  }
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian with state-independent log standard deviation.

struct PolicyOutput {
  std::vector<double> mean;
  std::vector<double> log_std;
};

inline double gaussian_logprob(std::span<const double> mean,
                               std::span<const double> log_std,
                               std::span<const double> action) {
  if (mean.size() != log_std.size() || mean.size() != action.size())
    throw ConfigError("gaussian_logprob dimension mismatch");
  double lp = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double z = (action[k] - mean[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - 0.5 * kLog2Pi;
  }
  if (!std::isfinite(lp)) throw NumericError("non-finite gaussian log-prob");
  return lp;
}

/// Gradients of gaussian_logprob w.r.t. mean and log_std (written, not added).
inline void gaussian_logprob_grad(std::span<const double> mean,
                                  std::span<const double> log_std,
                                  std::span<const double> action,
                                  std::span<double> d_mean,
                                  std::span<double> d_log_std) {
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double inv_std = std::exp(-log_std[k]);
    const double z = (action[k] - mean[k]) * inv_std;
    d_mean[k] = z * inv_std;
    d_log_std[k] = z * z - 1.0;
  }
}

inline double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double ls : log_std) h += 0.5 * (1.0 + kLog2Pi) + ls;
  return h;
}

// ---------------------------------------------------------------------------
// Policy and value networks.

/// Gaussian policy (mlp -> mean, plus a trailing "log_std" parameter) and a
/// scalar value network.
struct ActorCritic {
  ParamSet policy;
  ParamSet value;

  std::size_t obs_dim() const { return mlp_input_dim(value); }
  std::size_t act_dim() const { return mlp_output_dim(policy); }
  Parameter& log_std() { return policy.params.back(); }
  const Parameter& log_std() const { return policy.params.back(); }

  friend bool operator==(const ActorCritic&, const ActorCritic&) = default;
};

inline ActorCritic make_actor_critic(std::size_t obs_dim, std::size_t act_dim,
                                     std::size_t hidden, Rng& rng,
                                     std::size_t hidden_layers = 2) {
  std::vector<std::size_t> pol{obs_dim};
  std::vector<std::size_t> val{obs_dim};
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    pol.push_back(hidden);
    val.push_back(hidden);
  }
  pol.push_back(act_dim);
  val.push_back(1);
  ActorCritic ac;
  add_mlp(ac.policy, pol, rng, 0.01);
  ac.policy.add("log_std", act_dim);
  add_mlp(ac.value, val, rng, 1.0);
  return ac;
}

// ---------------------------------------------------------------------------
// Optimizer and gradient clipping.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(ParamSet& ps, double lr, const AdamConfig& cfg = {}) {
  for (const auto& p : ps.params)
    for (double g : p.grad)
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in " + p.name);
  ++ps.step;
  const double t = static_cast<double>(ps.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : ps.params) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p.m[i] / c1;
      const double v_hat = p.v[i] / c2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      if (!std::isfinite(p.value[i]))
        throw NumericError("non-finite parameter after step in " + p.name);
    }
  }
}

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_global_grad_norm(std::span<ParamSet* const> sets,
                                    double max_norm) {
  double sq = 0.0;
  for (const ParamSet* ps : sets)
    for (const auto& p : ps->params)
      for (double g : p.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (ParamSet* ps : sets)
      for (auto& p : ps->params)
        for (double& g : p.grad) g *= scale;
  }
  return norm;
}

inline double clip_global_grad_norm(ParamSet& ps, double max_norm) {
  ParamSet* one[] = {&ps};
  return clip_global_grad_norm(one, max_norm);
}

}  // namespace amppo
