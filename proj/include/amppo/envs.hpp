#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amppo/errors.hpp"
#include "amppo/rng.hpp"

namespace amppo {

enum class EnvId { PointMass1d, PointMass2d };

inline EnvId parse_env_id(std::string_view s) {
  if (s == "pointmass1d") return EnvId::PointMass1d;
  if (s == "pointmass2d") return EnvId::PointMass2d;
  throw ConfigError("unknown env_id '" + std::string(s) + "'");
}

inline std::string_view to_string(EnvId id) {
  return id == EnvId::PointMass1d ? "pointmass1d" : "pointmass2d";
}

struct StepResult {
  std::vector<double> next_observation;
  double reward = 0.0;
  bool done = false;
};

/// Point mass on a line or in the plane, driven by a clamped acceleration.
///
/// Observation is [position..., velocity...]. Reward penalizes distance from
/// the origin, speed and effort, so it is never positive. Episodes end only
/// at the time limit.
class PointMassEnv {
 public:
  static constexpr double kDt = 0.05;
  static constexpr std::size_t kHorizon = 200;

  explicit PointMassEnv(EnvId id) : id_(id) {
    const std::size_t d = dim();
    pos_.assign(d, 0.0);
    vel_.assign(d, 0.0);
  }

  EnvId id() const { return id_; }
  std::size_t dim() const { return id_ == EnvId::PointMass1d ? 1 : 2; }
  std::size_t obs_dim() const { return 2 * dim(); }
  std::size_t act_dim() const { return dim(); }
  std::size_t steps_elapsed() const { return steps_; }

  /// Reseeds the env's generator and samples a fresh initial state.
  std::vector<double> reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    return reset();
  }

  /// Samples a fresh initial state from the env's current generator.
  std::vector<double> reset() {
    for (auto& p : pos_) p = rng_.uniform(-1.0, 1.0);
    std::fill(vel_.begin(), vel_.end(), 0.0);
    steps_ = 0;
    return observation();
  }

  StepResult step(std::span<const double> action) {
    if (action.size() != act_dim())
      throw ConfigError("action dimension " + std::to_string(action.size()) +
                        " != " + std::to_string(act_dim()));
    if (steps_ >= kHorizon) throw ConfigError("step called after episode end");
    double pos_sq = 0.0, vel_sq = 0.0, act_sq = 0.0;
    for (std::size_t k = 0; k < dim(); ++k) {
      const double a = std::clamp(action[k], -1.0, 1.0);
      pos_[k] += vel_[k] * kDt;
      vel_[k] += a * kDt;
      pos_sq += pos_[k] * pos_[k];
      vel_sq += vel_[k] * vel_[k];
      act_sq += a * a;
    }
    ++steps_;
    StepResult r;
    r.reward = -(pos_sq + 0.1 * vel_sq + 0.001 * act_sq);
    r.done = steps_ == kHorizon;
    r.next_observation = observation();
    return r;
  }

  std::vector<double> observation() const {
    std::vector<double> obs(pos_);
    obs.insert(obs.end(), vel_.begin(), vel_.end());
    return obs;
  }

  /// Overwrites the physical state; used by tests and checkpoint restore.
  void set_state(std::span<const double> obs, std::size_t steps) {
    if (obs.size() != obs_dim()) throw ConfigError("state dimension mismatch");
    std::copy_n(obs.begin(), dim(), pos_.begin());
    std::copy_n(obs.begin() + dim(), dim(), vel_.begin());
    steps_ = steps;
  }

  const Rng& rng() const { return rng_; }
  void set_rng(Rng rng) { rng_ = std::move(rng); }

  friend bool operator==(const PointMassEnv&, const PointMassEnv&) = default;

 private:
  EnvId id_;
  std::vector<double> pos_;
  std::vector<double> vel_;
  std::size_t steps_ = 0;
  Rng rng_;
};

}  // namespace amppo
