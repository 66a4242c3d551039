#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "amppo/checkpoint.hpp"
#include "amppo/config.hpp"
#include "amppo/errors.hpp"
#include "amppo/trainer.hpp"

namespace amppo {

/// One metrics.jsonl line (no trailing newline). NaN is written as null.
inline std::string metrics_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["global_step"] = r.global_step;
  j["mean_episodic_return"] = r.mean_episodic_return;
  j["policy_loss"] = r.policy_loss;
  j["value_loss"] = r.value_loss;
  j["entropy"] = r.entropy;
  j["alpha_ema"] = r.alpha_ema;
  j["sat_ema"] = r.sat_ema;
  j["sat_current"] = r.sat_current;
  j["ratio_clip_fraction"] = r.ratio_clip_fraction;
  j["grad_norm_preclip"] = r.grad_norm_preclip;
  j["lr_current"] = r.lr_current;
  return j.dump();
}

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.resolved"; }
  std::filesystem::path metrics() const { return dir / "metrics.jsonl"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.final"; }
};

/// Trains until the configured number of iterations, writing
/// config.resolved, metrics.jsonl and checkpoint.final under out_dir.
///
/// With `append`, metrics are appended (used when resuming). On a numeric
/// failure the last good state is written as checkpoint.final and the
/// NumericError is rethrown.
inline std::vector<MetricsRecord> train_run(TrainState state,
                                            const std::string& out_dir,
                                            bool append = false,
                                            std::ostream* progress = nullptr) {
  const RunPaths paths{out_dir};
  std::filesystem::create_directories(paths.dir);
  {
    std::ofstream cfg(paths.config(), std::ios::binary | std::ios::trunc);
    if (!cfg) throw ConfigError("out_dir: cannot write " + paths.config().string());
    cfg << to_toml(state.config);
  }
  std::ofstream metrics(paths.metrics(), std::ios::binary |
                                             (append ? std::ios::app
                                                     : std::ios::trunc));
  if (!metrics)
    throw ConfigError("out_dir: cannot write " + paths.metrics().string());

  std::vector<MetricsRecord> records;
  while (!finished(state)) {
    TrainState last_good = state;
    try {
      records.push_back(run_iteration(state));
    } catch (const NumericError&) {
      save_checkpoint(last_good, paths.checkpoint().string());
      throw;
    }
    const auto& r = records.back();
    metrics << metrics_json_line(r) << '\n';
    metrics.flush();
    if (progress) {
      *progress << "iter " << r.iteration << "/" << state.config.num_iterations()
                << "  step " << r.global_step << "  return "
                << format_double(r.mean_episodic_return) << "  alpha "
                << format_double(r.alpha_ema) << '\n';
    }
  }
  save_checkpoint(state, paths.checkpoint().string());
  return records;
}

inline std::string eval_json(const EvalSummary& s, const std::string& checkpoint,
                             std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["checkpoint"] = checkpoint;
  j["seed"] = seed;
  j["episodes"] = s.episodes;
  j["mean_return"] = s.mean_return;
  j["std_return"] = s.std_return;
  j["returns"] = s.returns;
  return j.dump(2) + "\n";
}

}  // namespace amppo
