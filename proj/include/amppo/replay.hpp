#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "amppo/config.hpp"
#include "amppo/errors.hpp"
#include "amppo/modulation.hpp"

namespace amppo {

/// Advantages recorded for one training iteration.
struct TraceGroup {
  std::int64_t iteration = 0;
  std::vector<double> values;
};

struct ReplayRow {
  std::int64_t iteration = 0;
  double alpha_ema = 0.0;
  double sat_current = 0.0;
  double sat_ema = 0.0;
  double mean_abs_a_mod = 0.0;
};

/// Parses a CSV with header "iteration,value". Rows of one iteration must be
/// contiguous. Errors name the offending line.
inline std::vector<TraceGroup> parse_trace_csv(std::string_view text) {
  std::vector<TraceGroup> groups;
  std::set<std::int64_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  auto fail = [&](const std::string& why) {
    throw ConfigError("trace line " + std::to_string(line_no) + ": " + why);
  };
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header) {
      if (line != "iteration,value") fail("expected header 'iteration,value'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
      fail("expected two comma-separated fields");
    const std::string_view it_text = detail::trim(line.substr(0, comma));
    const std::string_view val_text = detail::trim(line.substr(comma + 1));

    std::int64_t it = 0;
    auto r1 = std::from_chars(it_text.data(), it_text.data() + it_text.size(), it);
    if (it_text.empty() || r1.ec != std::errc{} ||
        r1.ptr != it_text.data() + it_text.size())
      fail("bad iteration '" + std::string(it_text) + "'");
    double v = 0.0;
    const char* vb = val_text.data();
    const char* ve = val_text.data() + val_text.size();
    if (vb != ve && *vb == '+') ++vb;
    auto r2 = std::from_chars(vb, ve, v);
    if (val_text.empty() || r2.ec != std::errc{} || r2.ptr != ve ||
        !std::isfinite(v))
      fail("bad value '" + std::string(val_text) + "'");

    if (groups.empty() || groups.back().iteration != it) {
      if (!seen.insert(it).second)
        fail("iteration " + std::to_string(it) + " is not contiguous");
      groups.push_back({it, {}});
    }
    groups.back().values.push_back(v);
  }
  if (!header) throw ConfigError("trace line 1: missing header 'iteration,value'");
  return groups;
}

/// Feeds each group through the controller update, then modulates the whole
/// group as one minibatch with the resulting frozen alpha.
inline std::vector<ReplayRow> replay_controller(
    const std::vector<TraceGroup>& groups, const ModulationConfig& cfg) {
  validate(cfg);
  ControllerState s = ControllerState::initial(cfg);
  std::vector<ReplayRow> rows;
  for (const auto& g : groups) {
    const auto step = update_controller_step(s, g.values, cfg);
    s = step.state;
    const auto a_mod = modulate_minibatch(g.values, s.frozen_alpha, cfg);
    double abs_sum = 0.0;
    for (double a : a_mod) abs_sum += std::abs(a);
    rows.push_back({g.iteration, s.alpha_ema, step.sat_current, s.sat_ema,
                    abs_sum / static_cast<double>(a_mod.size())});
  }
  return rows;
}

inline std::string replay_csv(const std::vector<ReplayRow>& rows) {
  std::string out = "iteration,alpha_ema,sat_current,sat_ema,mean_abs_a_mod\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + ',' + format_double(r.alpha_ema) +
           ',' + format_double(r.sat_current) + ',' + format_double(r.sat_ema) +
           ',' + format_double(r.mean_abs_a_mod) + '\n';
  }
  return out;
}

}  // namespace amppo
