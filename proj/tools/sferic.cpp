#include <iostream>

#include "CLI11.hpp"
#include "sferic/cli.hpp"

namespace {

using namespace sferic;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<double> threshold;
  std::string mode;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--seed", c.seed, "master seed (overrides config)");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--threshold", c.threshold, "detection threshold (overrides detector.threshold)");
  cmd->add_option("--mode", c.mode, "spectral mode: even, sferic or both (overrides process.mode)");
  cmd->add_option("--set", c.sets, "override one config key, key=value (repeatable)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::parse(io::read_file(c.config_path));
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t"));
      v.erase(v.find_last_not_of(" \t") + 1);
      return v;
    };
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (c.threshold) cfg.set("detector.threshold", detail::format_double(*c.threshold));
  if (!c.mode.empty()) cfg.set("process.mode", c.mode);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sferic detection and sferic-mode impedance estimation for AMT time series"};
  app.require_subcommand(1);
  const std::string keys = "Config keys (key = default  # [unit] description):\n" + defaults_text();
  app.footer(keys);

  Common common;
  bool defaults = false;
  using Command = int (*)(const RunConfig&, const std::filesystem::path&, std::ostream&);
  std::vector<std::pair<CLI::App*, Command>> commands;
  auto add = [&](const char* name, const char* help, Command fn) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->footer(keys);
    add_common(cmd, common);
    commands.emplace_back(cmd, fn);
  };
  add("synth", "generate synthetic station series and catalogs", cli::cmd_synth);
  add("train", "train the sferic classifier", cli::cmd_train);
  add("detect", "scan a series for sferics", cli::cmd_detect);
  add("process", "estimate impedance in even and/or sferic mode", cli::cmd_process);
  auto* config_cmd = app.add_subcommand("config", "print configuration");
  config_cmd->footer(keys);
  add_common(config_cmd, common);
  config_cmd->add_flag("--defaults", defaults, "print every key with its default, unit and description");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfig;
  }

  try {
    const auto cfg = resolve(common);
    if (config_cmd->parsed()) {
      std::cout << (defaults ? defaults_text() : cfg.dump());
      return cli::kOk;
    }
    std::filesystem::create_directories(common.out);
    for (const auto& [cmd, fn] : commands)
      if (cmd->parsed()) return fn(cfg, common.out, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kData;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return cli::kConvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kData;
  }
  return cli::kOk;
}
