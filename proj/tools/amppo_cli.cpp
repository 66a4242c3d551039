// Command-line driver: train, eval, replay-controller.
//
// Exit codes: 0 success, 2 configuration / input error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "amppo/amppo.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct FieldFlag {
  std::string name;
  std::string text;
  CLI::Option* opt = nullptr;
};

std::string flag_name(std::string_view field) {
  std::string s(field);
  for (auto& c : s)
    if (c == '_') c = '-';
  return "--" + s;
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw amppo::ConfigError(std::string(what) + ": cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AM-PPO: PPO with adaptive advantage modulation"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a policy");
  std::string config_path;
  std::string resume_path;
  bool quiet = false;
  train->add_option("--config", config_path, "TOML config file");
  train->add_option("--resume", resume_path,
                    "Continue from a checkpoint (metrics are appended)");
  train->add_flag("--quiet", quiet, "No per-iteration progress output");
  std::vector<std::unique_ptr<FieldFlag>> fields;
  {
    amppo::RunConfig probe;
    amppo::for_each_field(probe, [&](std::string_view name, auto&, bool) {
      auto f = std::make_unique<FieldFlag>();
      f->name = std::string(name);
      std::string flags = flag_name(name);
      if (name == "out_dir") flags += ",--out";
      f->opt = train->add_option(flags, f->text, "Override " + f->name);
      fields.push_back(std::move(f));
    });
  }

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate the deterministic policy");
  std::string ckpt_path;
  std::size_t episodes = 10;
  std::uint64_t eval_seed = 0;
  std::string eval_out;
  eval->add_option("checkpoint,--checkpoint", ckpt_path, "Checkpoint file")
      ->required();
  eval->add_option("--episodes", episodes, "Number of episodes")
      ->capture_default_str();
  eval->add_option("--seed", eval_seed, "Reset seed")->capture_default_str();
  eval->add_option("--out", eval_out,
                   "Path of eval.json (default: next to the checkpoint)");

  // replay-controller
  auto* replay = app.add_subcommand(
      "replay-controller", "Replay the advantage controller over a trace CSV");
  std::string trace_path;
  std::string replay_config;
  std::string replay_out;
  replay->add_option("trace,--trace", trace_path, "CSV with header iteration,value")
      ->required();
  replay->add_option("--config", replay_config, "TOML config for controller constants");
  replay->add_option("--out", replay_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      amppo::TrainState state;
      bool append = false;
      if (!resume_path.empty()) {
        state = amppo::load_checkpoint(resume_path);
        append = true;
        // Only the run length and output location may change on resume.
        for (const auto& f : fields) {
          if (f->opt->count() == 0) continue;
          if (f->name != "total_timesteps" && f->name != "out_dir")
            throw amppo::ConfigError(f->name + ": cannot be changed on resume");
          amppo::set_field_from_arg(state.config, f->name, f->text);
        }
        amppo::validate(state.config);
      } else {
        amppo::RunConfig cfg;
        if (!config_path.empty()) cfg = amppo::load_config(config_path);
        for (const auto& f : fields)
          if (f->opt->count() > 0) amppo::set_field_from_arg(cfg, f->name, f->text);
        state = amppo::init_train_state(cfg);
      }
      const std::string out_dir = state.config.out_dir;
      const auto records =
          amppo::train_run(std::move(state), out_dir, append, quiet ? nullptr : &std::cout);
      std::cout << "wrote " << records.size() << " iterations to " << out_dir << '\n';
      return 0;
    }

    if (*eval) {
      const auto state = amppo::load_checkpoint(ckpt_path);
      const auto summary =
          amppo::evaluate(state.ac, state.config.env_id, episodes, eval_seed);
      std::filesystem::path out = eval_out.empty()
                                      ? std::filesystem::path(ckpt_path).parent_path() / "eval.json"
                                      : std::filesystem::path(eval_out);
      std::ofstream f(out, std::ios::binary | std::ios::trunc);
      if (!f) throw amppo::ConfigError("out: cannot write " + out.string());
      f << amppo::eval_json(summary, ckpt_path, eval_seed);
      std::cout << "episodes " << summary.episodes << "  mean_return "
                << amppo::format_double(summary.mean_return) << "  std_return "
                << amppo::format_double(summary.std_return) << '\n';
      return 0;
    }

    if (*replay) {
      amppo::ModulationConfig mcfg;
      if (!replay_config.empty()) mcfg = amppo::load_config(replay_config).modulation;
      const auto groups = amppo::parse_trace_csv(read_file(trace_path, "trace"));
      const auto csv = amppo::replay_csv(amppo::replay_controller(groups, mcfg));
      if (replay_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream f(replay_out, std::ios::binary | std::ios::trunc);
        if (!f) throw amppo::ConfigError("out: cannot write " + replay_out);
        f << csv;
      }
      return 0;
    }
  } catch (const amppo::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const amppo::NumericError& e) {
    std::cerr << "numeric failure: " << e.what()
              << " (last good state written to checkpoint.final)\n";
    return kExitNumeric;
  }
  return 0;
}
