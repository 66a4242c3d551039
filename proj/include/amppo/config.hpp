#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "amppo/envs.hpp"
#include "amppo/errors.hpp"
#include "amppo/modulation.hpp"
#include "amppo/update.hpp"

namespace amppo {

/// Everything a training run needs. Defaults are the published AM-PPO
/// settings wherever one exists; see for_each_field for which are not.
struct RunConfig {
  EnvId env_id = EnvId::PointMass1d;
  std::uint64_t seed = 1;
  std::size_t total_timesteps = 1'000'000;
  std::size_t num_envs = 1;
  std::size_t num_steps = 2048;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t hidden = 64;
  std::string out_dir = "runs/amppo";
  UpdateConfig update;
  ModulationConfig modulation;

  std::size_t batch_size() const { return num_steps * num_envs; }
  std::size_t num_iterations() const { return total_timesteps / batch_size(); }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Calls f(name, member, paper_default) for every RunConfig field, in the
/// order they are written to config.resolved.
template <typename Config, typename F>
void for_each_field(Config& c, F&& f) {
  f("env_id", c.env_id, false);
  f("algo", c.update.algo, false);
  f("seed", c.seed, false);
  f("total_timesteps", c.total_timesteps, true);
  f("num_envs", c.num_envs, true);
  f("num_steps", c.num_steps, true);
  f("gamma", c.gamma, true);
  f("gae_lambda", c.gae_lambda, true);
  f("learning_rate", c.update.lr, false);
  f("anneal_lr", c.update.anneal_lr, true);
  f("num_minibatches", c.update.n_minibatches, true);
  f("update_epochs", c.update.n_epochs, true);
  f("norm_adv", c.update.norm_adv, false);
  f("clip_coef", c.update.clip_eps, true);
  f("clip_vloss", c.update.clip_vloss, true);
  f("ent_coef", c.update.ent_coef, true);
  f("vf_coef", c.update.vf_coef, true);
  f("max_grad_norm", c.update.max_grad_norm, true);
  f("hidden", c.hidden, false);
  f("kappa", c.modulation.kappa, true);
  f("tau", c.modulation.tau, true);
  f("p_star", c.modulation.p_star, true);
  f("eta", c.modulation.eta, true);
  f("rho_alpha", c.modulation.rho_alpha, true);
  f("rho_sat", c.modulation.rho_sat, true);
  f("alpha_min", c.modulation.alpha_min, true);
  f("alpha_max", c.modulation.alpha_max, true);
  f("eps_a", c.modulation.eps, true);
  f("alpha_init", c.modulation.alpha_init, true);
  f("sat_init", c.modulation.sat_init, true);
  f("out_dir", c.out_dir, false);
}

/// Shortest text that parses back to exactly x.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, end);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string_view v, std::string_view field) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"')
    throw ConfigError(std::string(field) + ": expected a quoted string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) {
      const char n = v[++i];
      out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
    } else {
      out += v[i];
    }
  }
  return out;
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <typename T>
void parse_value(std::string_view text, T& out, std::string_view field) {
  const std::string_view v = trim(text);
  auto fail = [&](const char* what) {
    throw ConfigError(std::string(field) + ": " + what + " (got '" +
                      std::string(v) + "')");
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true") out = true;
    else if (v == "false") out = false;
    else fail("expected true or false");
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = unquote(v, field);
  } else if constexpr (std::is_same_v<T, EnvId>) {
    try {
      out = parse_env_id(v.front() == '"' ? unquote(v, field) : std::string(v));
    } catch (const ConfigError&) {
      fail("expected \"pointmass1d\" or \"pointmass2d\"");
    }
  } else if constexpr (std::is_same_v<T, Algo>) {
    try {
      out = parse_algo(v.front() == '"' ? unquote(v, field) : std::string(v));
    } catch (const ConfigError&) {
      fail("expected \"ppo\" or \"am-ppo\"");
    }
  } else {
    std::string digits;
    for (char c : v)
      if (c != '_') digits += c;
    if (digits.empty()) fail("expected a number");
    const char* first = digits.data();
    const char* last = digits.data() + digits.size();
    if (*first == '+') ++first;
    std::from_chars_result r{};
    if constexpr (std::is_integral_v<T>) {
      if (*first == '-') fail("expected a non-negative integer");
      r = std::from_chars(first, last, out);
    } else {
      r = std::from_chars(first, last, out);
      if (r.ec == std::errc{} && !std::isfinite(out)) fail("must be finite");
    }
    if (r.ec != std::errc{} || r.ptr != last) fail("expected a number");
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, std::string>) return quote(v);
  else if constexpr (std::is_same_v<T, EnvId> || std::is_same_v<T, Algo>)
    return quote(to_string(v));
  else if constexpr (std::is_floating_point_v<T>) return format_double(v);
  else return std::to_string(v);
}

}  // namespace detail

/// Sets one field from its text form (TOML value syntax). Unknown names are
/// configuration errors.
inline void set_field(RunConfig& c, std::string_view name,
                      std::string_view text) {
  bool found = false;
  for_each_field(c, [&](std::string_view n, auto& member, bool) {
    if (n != name) return;
    detail::parse_value(text, member, n);
    found = true;
  });
  if (!found) throw ConfigError(std::string(name) + ": unknown config key");
}

/// Sets one field from a command-line argument: like set_field, but string
/// and enum values are taken verbatim instead of requiring TOML quotes.
inline void set_field_from_arg(RunConfig& c, std::string_view name,
                               std::string_view arg) {
  bool found = false;
  for_each_field(c, [&](std::string_view n, auto& member, bool) {
    if (n != name) return;
    using T = std::decay_t<decltype(member)>;
    if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, EnvId> ||
                  std::is_same_v<T, Algo>) {
      detail::parse_value(detail::quote(arg), member, n);
    } else {
      detail::parse_value(arg, member, n);
    }
    found = true;
  });
  if (!found) throw ConfigError(std::string(name) + ": unknown config key");
}

/// Applies `key = value` lines on top of `c`. Comments (#) and blank lines
/// are ignored; tables and arrays are not supported.
inline void apply_toml(RunConfig& c, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line = line.substr(0, i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[')
      throw ConfigError("line " + std::to_string(line_no) +
                        ": tables are not supported");
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string_view key = detail::trim(line.substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"')
      key = key.substr(1, key.size() - 2);
    set_field(c, key, line.substr(eq + 1));
  }
}

inline RunConfig parse_toml(std::string_view text) {
  RunConfig c;
  apply_toml(c, text);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

/// Flat TOML with every field; non-paper defaults are annotated.
inline std::string to_toml(const RunConfig& c) {
  std::string out =
      "# Resolved run configuration.\n"
      "# Fields marked 'non-paper default' have no published value.\n";
  for_each_field(c, [&](std::string_view name, const auto& v, bool paper) {
    out += std::string(name) + " = " + detail::format_value(v);
    if (!paper) out += "  # non-paper default";
    out += '\n';
  });
  return out;
}

inline void validate(const RunConfig& c) {
  auto fail = [](const char* field, const char* why) {
    throw ConfigError(std::string(field) + ": " + why);
  };
  if (c.num_envs == 0) fail("num_envs", "must be >= 1");
  if (c.num_steps == 0) fail("num_steps", "must be >= 1");
  if (c.hidden == 0) fail("hidden", "must be >= 1");
  if (c.total_timesteps < c.batch_size())
    fail("total_timesteps", "must be at least num_steps * num_envs");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) fail("gamma", "must lie in [0,1]");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0))
    fail("gae_lambda", "must lie in [0,1]");
  validate(c.update, c.batch_size());
  validate(c.modulation);
}

}  // namespace amppo
