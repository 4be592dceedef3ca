#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sferic/cli.hpp"

using namespace sferic;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sferic_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string output;
};

Run run_cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(SFERIC_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

constexpr const char* kTiny = R"(seed = 5
synth.stations = 3
synth.duration_s = 0.5
noise.white_std = 0.2
network.block_widths = 4,4,4,4,4
network.convs_per_block = 1
network.fc_widths = 8
trainer.max_epochs = 2
trainer.train_per_epoch = 64
trainer.val_per_epoch = 32
sampling.split = 1,1,1
spectra.f_lo_hz = 1500
spectra.f_hi_hz = 5000
spectra.periods = 48
)";

}  // namespace

TEST(Config, DefaultsParseAndOverride) {
  auto c = RunConfig::parse("# comment\nseed = 9\n  sampling.n=120  # trailing\n");
  EXPECT_EQ(c.seed(), 9u);
  EXPECT_EQ(c.count("sampling.n"), 120u);
  EXPECT_EQ(c.count("sampling.r"), 36u);
  EXPECT_EQ(c.channels("sampling.channels").size(), 4u);
  EXPECT_EQ(c.reals("noise.harmonic_amplitudes"), (std::vector<double>{0.2, 0.05, 0.05}));
  EXPECT_TRUE(c.list("synth.earth.thicknesses").empty());
}

TEST(Config, ErrorsNameTheKey) {
  auto expect_key = [](auto fn, const std::string& key) {
    try {
      fn();
      ADD_FAILURE() << key;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_key([] { RunConfig::parse("bogus.key = 1\n"); }, "bogus.key");
  expect_key([] { RunConfig::parse("sampling.n = ten\n").count("sampling.n"); }, "sampling.n");
  expect_key([] { RunConfig::parse("noise.white_std = nan\n").real("noise.white_std"); }, "noise.white_std");
  expect_key([] { RunConfig::parse("detector.strict = maybe\n").flag("detector.strict"); }, "detector.strict");
  expect_key([] { scenario_from(RunConfig::parse("synth.earth.resistivities = -3\n")); }, "synth.earth.resistivities");
  EXPECT_THROW(RunConfig::parse("no equals sign\n"), ConfigError);
}

TEST(Config, DefaultsTextListsEveryKeyWithUnit) {
  const auto text = defaults_text();
  for (const auto& k : kConfigKeys) {
    const auto pos = text.find(std::string(k.key) + " = " + std::string(k.default_value));
    ASSERT_NE(pos, std::string::npos) << k.key;
    EXPECT_NE(text.find("[" + std::string(k.unit) + "]", pos), std::string::npos);
  }
  EXPECT_EQ(RunConfig::parse(RunConfig{}.dump()).dump(), RunConfig{}.dump());
}

TEST(Config, BuildersAcceptDefaults) {
  RunConfig c;
  EXPECT_NO_THROW(scenario_from(c));
  EXPECT_NO_THROW(sampling_from(c));
  EXPECT_NO_THROW(network_from(c));
  EXPECT_NO_THROW(fit_from(c));
  EXPECT_NO_THROW(detector_from(c));
  EXPECT_NO_THROW(process_from(c));
}

TEST(Synth, CommandIsDeterministic) {
  auto cfg = RunConfig::parse(kTiny);
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_synth(cfg, a, log), cli::kOk);
  ASSERT_EQ(cli::cmd_synth(cfg, b, log), cli::kOk);
  for (const auto* f : {"station000.sfamt", "station002.cat", "stations.txt"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(read_series(a / "station001.sfamt").length(), 24000u);
}

TEST(Binary, HelpListsEveryKey) {
  const auto d = scratch("help");
  const auto r = run_cli("--help", d);
  EXPECT_EQ(r.code, 0);
  for (const auto& k : kConfigKeys) EXPECT_NE(r.output.find(std::string(k.key)), std::string::npos) << k.key;
  EXPECT_EQ(run_cli("process --help", d).code, 0);
}

TEST(Binary, ExitCodes) {
  const auto d = scratch("codes");
  auto bad = run_cli("synth --out " + (d / "o").string() + " --set synth.earth.resistivities=-1", d);
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("synth.earth.resistivities"), std::string::npos) << bad.output;
  EXPECT_EQ(run_cli("synth --set nope=1", d).code, 2);
  EXPECT_EQ(run_cli("frobnicate", d).code, 2);
  auto missing = run_cli("detect --out " + (d / "o").string() + " --set input.series=" + (d / "none.sfamt").string() +
                             " --set input.checkpoint=" + (d / "none.ckpt").string(),
                         d);
  EXPECT_EQ(missing.code, 3);
  EXPECT_EQ(run_cli("config --defaults", d).code, 0);
}

TEST(Binary, PipelineIsByteReproducible) {
  const auto root = scratch("pipeline");
  {
    std::ofstream(root / "tiny.conf") << kTiny;
  }
  const auto conf = (root / "tiny.conf").string();
  auto pipeline = [&](const std::string& tag) {
    const auto o = root / tag;
    EXPECT_EQ(run_cli("synth --config " + conf + " --out " + o.string(), root).code, 0);
    EXPECT_EQ(run_cli("train --config " + conf + " --out " + o.string(), root).code, 0);
    const std::string common = " --config " + conf + " --out " + o.string() + " --set input.series=" +
                               (o / "station002.sfamt").string() + " --set input.checkpoint=" +
                               (o / "model.ckpt").string();
    EXPECT_EQ(run_cli("detect" + common, root).code, 0);
    EXPECT_FALSE(fs::exists(o / "report.txt"));
    EXPECT_EQ(run_cli("detect" + common + " --set input.catalog=" + (o / "station002.cat").string() +
                          " --set detector.sweep=true",
                      root)
                  .code,
              0);
    EXPECT_TRUE(fs::exists(o / "report.txt"));
    const int pc = run_cli("process" + common + " --set input.catalog=" + (o / "station002.cat").string(), root).code;
    EXPECT_TRUE(pc == 0 || pc == 4) << pc;
    return o;
  };
  const auto a = pipeline("a"), b = pipeline("b");
  for (const auto* f : {"station002.sfamt", "model.ckpt", "history.csv", "segments.csv", "sweep.csv", "report.txt",
                        "impedance.csv", "ensemble.csv", "rho_phase.svg", "phase_tensor.svg"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto report = slurp(a / "report.txt");
  EXPECT_NE(report.find("segment.f1"), std::string::npos);
  EXPECT_NE(report.find("window.accuracy"), std::string::npos);
}

TEST(Binary, ResumeContinuesEpochs) {
  const auto root = scratch("resume");
  {
    std::ofstream(root / "tiny.conf") << kTiny;
  }
  const auto conf = (root / "tiny.conf").string();
  ASSERT_EQ(run_cli("train --config " + conf + " --out " + (root / "a").string(), root).code, 0);
  ASSERT_EQ(run_cli("train --config " + conf + " --out " + (root / "b").string() +
                        " --set trainer.resume=" + (root / "a" / "model.ckpt").string(),
                    root)
                .code,
            0);
  const auto hist = slurp(root / "b" / "history.csv");
  const auto ckpt = nn::load_checkpoint(root / "a" / "model.ckpt");
  EXPECT_NE(hist.find("\n" + std::to_string(ckpt.epoch + 1) + ","), std::string::npos) << hist;
}
