#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "amppo/config.hpp"
#include "amppo/errors.hpp"
#include "amppo/trainer.hpp"

namespace amppo {

inline constexpr const char* kCheckpointFormat = "amppo-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

using json = nlohmann::json;

inline json to_json(const ParamSet& ps) {
  json params = json::array();
  for (const auto& p : ps.params) {
    params.push_back({{"name", p.name},
                      {"rows", p.rows},
                      {"cols", p.cols},
                      {"value", p.value},
                      {"grad", p.grad},
                      {"m", p.m},
                      {"v", p.v}});
  }
  return {{"mlp_layers", ps.mlp_layers}, {"step", ps.step}, {"params", params}};
}

inline ParamSet param_set_from_json(const json& j) {
  ParamSet ps;
  ps.mlp_layers = j.at("mlp_layers").get<std::size_t>();
  ps.step = j.at("step").get<std::int64_t>();
  for (const auto& pj : j.at("params")) {
    auto& p = ps.add(pj.at("name").get<std::string>(),
                     pj.at("rows").get<std::size_t>(),
                     pj.at("cols").get<std::size_t>());
    p.value = pj.at("value").get<std::vector<double>>();
    const std::size_t n = p.grad.size();
    p.grad = pj.at("grad").get<std::vector<double>>();
    p.m = pj.at("m").get<std::vector<double>>();
    p.v = pj.at("v").get<std::vector<double>>();
    if (p.value.size() != n || p.grad.size() != n || p.m.size() != n ||
        p.v.size() != n)
      throw ConfigError("checkpoint: parameter '" + p.name + "' has wrong size");
  }
  if (ps.mlp_layers == 0 || 2 * ps.mlp_layers > ps.size())
    throw ConfigError("checkpoint: bad layer count");
  return ps;
}

}  // namespace detail

/// Self-describing JSON snapshot of everything needed to resume bit-exactly.
inline std::string serialize_checkpoint(const TrainState& s) {
  using detail::json;
  json envs = json::array();
  for (std::size_t e = 0; e < s.worker.envs.size(); ++e) {
    const auto& env = s.worker.envs[e];
    envs.push_back({{"observation", env.observation()},
                    {"steps_elapsed", env.steps_elapsed()},
                    {"running_return", s.worker.running_return[e]},
                    {"rng", env.rng().serialize()}});
  }
  json j = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"config", to_toml(s.config)},
      {"iteration", s.iteration},
      {"global_step", s.global_step},
      {"controller",
       {{"alpha_ema", s.ctrl.alpha_ema},
        {"sat_ema", s.ctrl.sat_ema},
        {"frozen_alpha", s.ctrl.frozen_alpha}}},
      {"policy", detail::to_json(s.ac.policy)},
      {"value", detail::to_json(s.ac.value)},
      {"envs", envs},
      {"rng",
       {{"action", s.action_rng.serialize()},
        {"shuffle", s.shuffle_rng.serialize()}}},
  };
  return j.dump() + "\n";
}

inline TrainState deserialize_checkpoint(const std::string& text) {
  using detail::json;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw ConfigError("checkpoint: not an amppo checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ConfigError("checkpoint: unsupported version");

    TrainState s;
    s.config = parse_toml(j.at("config").get<std::string>());
    validate(s.config);
    s.iteration = j.at("iteration").get<std::size_t>();
    s.global_step = j.at("global_step").get<std::size_t>();
    const auto& c = j.at("controller");
    s.ctrl = {c.at("alpha_ema").get<double>(), c.at("sat_ema").get<double>(),
              c.at("frozen_alpha").get<double>()};
    s.ac.policy = detail::param_set_from_json(j.at("policy"));
    s.ac.value = detail::param_set_from_json(j.at("value"));

    const PointMassEnv probe(s.config.env_id);
    if (s.ac.obs_dim() != probe.obs_dim() || s.ac.act_dim() != probe.act_dim() ||
        mlp_input_dim(s.ac.policy) != probe.obs_dim() ||
        s.ac.log_std().size() != probe.act_dim())
      throw ConfigError("checkpoint: network does not match env_id");

    for (const auto& ej : j.at("envs")) {
      PointMassEnv env(s.config.env_id);
      env.set_state(ej.at("observation").get<std::vector<double>>(),
                    ej.at("steps_elapsed").get<std::size_t>());
      env.set_rng(Rng::deserialize(ej.at("rng").get<std::string>()));
      s.worker.envs.push_back(std::move(env));
      s.worker.running_return.push_back(ej.at("running_return").get<double>());
    }
    if (s.worker.envs.size() != s.config.num_envs)
      throw ConfigError("checkpoint: env count does not match config");
    s.action_rng = Rng::deserialize(j.at("rng").at("action").get<std::string>());
    s.shuffle_rng =
        Rng::deserialize(j.at("rng").at("shuffle").get<std::string>());
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const TrainState& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << serialize_checkpoint(s);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace amppo
