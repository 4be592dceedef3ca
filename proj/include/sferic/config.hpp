#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sferic/detector.hpp"
#include "sferic/error.hpp"
#include "sferic/nnet/network.hpp"
#include "sferic/process.hpp"
#include "sferic/sampling.hpp"
#include "sferic/scenario.hpp"
#include "sferic/trainer.hpp"

namespace sferic {

struct KeySpec {
  std::string_view key;
  std::string_view default_value;
  std::string_view unit;
  std::string_view doc;
};

// Every recognized configuration key. Lists are comma separated.
inline constexpr KeySpec kConfigKeys[] = {
    {"seed", "1", "-", "global seed; every random stream derives from it"},

    {"synth.stations", "12", "count", "independent synthetic series (stations)"},
    {"synth.duration_s", "2", "s", "length of each series"},
    {"synth.sample_rate_hz", "48000", "Hz", "sampling rate"},
    {"synth.earth.resistivities", "100", "ohm m", "layer resistivities, top to basement"},
    {"synth.earth.thicknesses", "", "m", "layer thicknesses, one per non-basement layer"},
    {"synth.sferic_rate_hz", "30", "1/s", "Poisson rate of sferic arrivals"},
    {"synth.min_separation_s", "0.005", "s", "dead time between consecutive sferics"},
    {"synth.edge_margin_s", "0.002", "s", "no sferic closer than this to either record end"},
    {"synth.amplitude_min", "1", "nT", "smallest sferic peak (log-uniform)"},
    {"synth.amplitude_max", "10", "nT", "largest sferic peak"},
    {"synth.carrier_min_hz", "1500", "Hz", "lowest sferic carrier frequency"},
    {"synth.carrier_max_hz", "6000", "Hz", "highest sferic carrier frequency"},
    {"synth.decay_min_s", "0.0002", "s", "shortest sferic decay time"},
    {"synth.decay_max_s", "0.0004", "s", "longest sferic decay time"},
    {"synth.onset_sharpness", "20000", "1/s", "rate of the sferic onset ramp"},
    {"synth.azimuth_center_deg", "45", "deg", "mean sferic azimuth (Hx = cos, Hy = sin)"},
    {"synth.azimuth_spread_deg", "60", "deg", "azimuths uniform within center +- spread"},
    {"synth.background_std", "0", "nT", "coherent white natural field added to H before the earth response"},
    {"synth.noise_spread", "1", "-", "per-station noise multiplier, log-uniform in [1/spread, spread]"},

    {"noise.white_std", "0.5", "nT", "white noise on H; E gets noise.e_gain times this"},
    {"noise.powerline_hz", "50", "Hz", "powerline fundamental"},
    {"noise.harmonic_amplitudes", "0.2,0.05,0.05", "nT", "amplitudes of powerline harmonics 1, 2, ..."},
    {"noise.impulse_rate_hz", "2", "1/s", "Poisson rate of rectangular noise bursts"},
    {"noise.impulse_amplitude", "1.5", "nT", "burst amplitude"},
    {"noise.impulse_width_s", "0.0002", "s", "burst duration"},
    {"noise.e_gain", "500", "(mV/km)/nT", "E-channel noise relative to H-channel noise"},

    {"sampling.n", "240", "samples", "classifier window length"},
    {"sampling.r", "36", "samples", "sferic mask radius"},
    {"sampling.snr_low", "0", "-", "augmentation S/N lower bound (1 = clean)"},
    {"sampling.snr_high", "1", "-", "augmentation S/N upper bound"},
    {"sampling.channels", "Ex,Ey,Hx,Hy", "-", "channels fed to the classifier, in order"},
    {"sampling.negative_ratio", "3", "-", "negatives drawn per positive"},
    {"sampling.split", "6,2,2", "-", "train/val/test ratios of the station split"},

    {"network.block_widths", "64,128,256,512,512", "channels", "output width of each conv block"},
    {"network.convs_per_block", "4", "count", "conv layers per block"},
    {"network.kernel_size", "3", "samples", "conv kernel length (odd)"},
    {"network.fc_widths", "256,128", "units", "hidden widths of the FC-BN-ReLU blocks"},

    {"trainer.max_epochs", "150", "epochs", "epoch limit"},
    {"trainer.batch_size", "16", "samples", "mini-batch size"},
    {"trainer.train_per_epoch", "640", "samples", "training samples drawn per epoch"},
    {"trainer.val_per_epoch", "160", "samples", "validation samples drawn per epoch"},
    {"trainer.lr", "0.001", "-", "initial Adam learning rate"},
    {"trainer.beta1", "0.9", "-", "Adam first-moment decay"},
    {"trainer.beta2", "0.999", "-", "Adam second-moment decay"},
    {"trainer.eps", "1e-08", "-", "Adam denominator guard"},
    {"trainer.plateau_patience", "30", "epochs", "epochs without val-accuracy gain before the lr halves"},
    {"trainer.plateau_factor", "0.5", "-", "lr multiplier on plateau"},
    {"trainer.early_stop_patience", "20", "epochs", "epochs without val-accuracy gain before stopping"},
    {"trainer.resume", "", "path", "checkpoint to resume from (continues epoch numbering)"},
    {"trainer.series", "", "paths", "series files to train on (catalog beside each as .cat); empty = synthesize"},
    {"trainer.train_manifest", "", "path", "fixed training samples (series_path start label); overrides trainer.series"},
    {"trainer.val_manifest", "", "path", "fixed validation samples, required with trainer.train_manifest"},

    {"detector.threshold", "0.5", "-", "window is positive when its probability is at least this"},
    {"detector.strict", "false", "-", "require two or more positive windows per segment"},
    {"detector.sweep", "false", "-", "also report metrics for thresholds 0.1 ... 0.9"},
    {"detector.reference_channel", "Hx", "-", "channel correlated during ensemble alignment"},
    {"detector.stacked_correlation", "false", "-", "correlate all channels (standardized, concatenated)"},
    {"detector.correlation_threshold", "0.7", "-", "ensemble members below this correlation are dropped"},
    {"detector.align_iterations", "10", "count", "maximum alignment passes"},

    {"spectra.f_lo_hz", "700", "Hz", "lowest target frequency"},
    {"spectra.f_hi_hz", "10400", "Hz", "highest target frequency"},
    {"spectra.per_decade", "12", "count", "log-spaced frequencies per decade"},
    {"spectra.periods", "24", "periods", "window length in periods of the target frequency"},
    {"spectra.gamma", "1", "-", "window stride as a fraction of the window length"},
    {"spectra.tau", "1", "-", "Slepian time-bandwidth (1..4), 2 tau - 1 tapers"},

    {"impedance.tolerance", "0.01", "-", "relative change of the weighted residual sum that ends a phase"},
    {"impedance.max_iterations", "50", "count", "IRLS iterations per phase"},
    {"impedance.huber_x0", "1.5", "-", "Huber threshold"},
    {"impedance.thomson_x0", "2.8", "-", "Thomson threshold"},
    {"impedance.scale_mode", "chi_square", "-", "MAD constant: chi_square (0.44845) or normal (0.6745)"},
    {"impedance.max_condition", "1e10", "-", "largest accepted condition number of H"},

    {"input.series", "", "path", "series for detect / process"},
    {"input.catalog", "", "path", "truth or given sferic catalog"},
    {"input.checkpoint", "", "path", "trained classifier for detect / process"},
    {"process.mode", "both", "-", "even, sferic or both"},
    {"process.compare_earth", "false", "-", "add analytic columns from synth.earth.* to the impedance table"},
};

inline const KeySpec* find_key(std::string_view key) {
  for (const auto& k : kConfigKeys)
    if (k.key == key) return &k;
  return nullptr;
}

/// Flat key = value configuration with documented defaults.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : kConfigKeys) values_.emplace(std::string(k.key), std::string(k.default_value));
  }

  static RunConfig parse(std::string_view text) {
    RunConfig c;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      auto line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
      c.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return c;
  }

  void set(const std::string& key, std::string value) {
    if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = std::move(value);
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const { return parse_real(key, str(key)); }

  std::int64_t integer(const std::string& key) const {
    const auto& s = str(key);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
  }

  std::size_t count(const std::string& key) const {
    const auto v = integer(key);
    if (v < 0) throw ConfigError(key + ": must be >= 0");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed() const {
    const auto& s = str("seed");
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("seed: expected a non-negative integer");
    return v;
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::string_view s = str(key);
    while (!trim(s).empty()) {
      auto comma = s.find(',');
      out.emplace_back(trim(s.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : list(key)) out.push_back(parse_real(key, s));
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : list(key)) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size())
        throw ConfigError(key + ": expected non-negative integers, got '" + s + "'");
      out.push_back(v);
    }
    return out;
  }

  std::vector<Channel> channels(const std::string& key) const {
    std::vector<Channel> out;
    for (const auto& s : list(key)) {
      auto c = parse_channel(s);
      if (!c) throw ConfigError(key + ": unknown channel '" + s + "'");
      out.push_back(*c);
    }
    return out;
  }

  // Current values in registry order, one "key = value" per line.
  std::string dump() const {
    std::string out;
    for (const auto& k : kConfigKeys) out += std::string(k.key) + " = " + values_.at(std::string(k.key)) + "\n";
    return out;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
      throw ConfigError(key + ": expected a finite number, got '" + s + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
};

// Documented defaults: "key = default  # [unit] doc".
inline std::string defaults_text() {
  std::string out;
  for (const auto& k : kConfigKeys) {
    std::string line = std::string(k.key) + " = " + std::string(k.default_value);
    if (line.size() < 44) line.resize(44, ' ');
    out += line + "  # [" + std::string(k.unit) + "] " + std::string(k.doc) + "\n";
  }
  return out;
}

inline Scenario scenario_from(const RunConfig& c) {
  Scenario s;
  s.stations = c.count("synth.stations");
  s.duration_s = c.real("synth.duration_s");
  s.sample_rate_hz = c.real("synth.sample_rate_hz");
  s.earth.resistivities = c.reals("synth.earth.resistivities");
  s.earth.thicknesses = c.reals("synth.earth.thicknesses");
  auto& p = s.population;
  p.rate_hz = c.real("synth.sferic_rate_hz");
  p.min_separation_s = c.real("synth.min_separation_s");
  p.edge_margin_s = c.real("synth.edge_margin_s");
  p.amplitude_min = c.real("synth.amplitude_min");
  p.amplitude_max = c.real("synth.amplitude_max");
  p.carrier_min_hz = c.real("synth.carrier_min_hz");
  p.carrier_max_hz = c.real("synth.carrier_max_hz");
  p.decay_min_s = c.real("synth.decay_min_s");
  p.decay_max_s = c.real("synth.decay_max_s");
  p.onset_sharpness = c.real("synth.onset_sharpness");
  p.azimuth_center_deg = c.real("synth.azimuth_center_deg");
  p.azimuth_spread_deg = c.real("synth.azimuth_spread_deg");
  s.background_std = c.real("synth.background_std");
  s.noise_spread = c.real("synth.noise_spread");
  auto& n = s.noise;
  n.white_std = c.real("noise.white_std");
  n.powerline_hz = c.real("noise.powerline_hz");
  n.harmonic_amplitudes = c.reals("noise.harmonic_amplitudes");
  n.impulse_rate_hz = c.real("noise.impulse_rate_hz");
  n.impulse_amplitude = c.real("noise.impulse_amplitude");
  n.impulse_width_s = c.real("noise.impulse_width_s");
  n.e_gain = c.real("noise.e_gain");
  if (!(s.duration_s > 0.0)) throw ConfigError("synth.duration_s must be positive");
  if (!(s.sample_rate_hz > 0.0)) throw ConfigError("synth.sample_rate_hz must be positive");
  s.validate();
  return s;
}

inline SamplingConfig sampling_from(const RunConfig& c) {
  SamplingConfig s;
  s.n = c.count("sampling.n");
  s.r = c.count("sampling.r");
  s.snr_low = c.real("sampling.snr_low");
  s.snr_high = c.real("sampling.snr_high");
  s.channels = c.channels("sampling.channels");
  s.validate();
  return s;
}

inline nn::NetworkConfig network_from(const RunConfig& c) {
  nn::NetworkConfig n;
  n.input_channels = c.channels("sampling.channels").size();
  n.input_length = c.count("sampling.n");
  n.block_widths = c.counts("network.block_widths");
  n.convs_per_block = c.count("network.convs_per_block");
  n.kernel_size = c.count("network.kernel_size");
  n.fc_widths = c.counts("network.fc_widths");
  n.validate();
  return n;
}

inline FitConfig fit_from(const RunConfig& c) {
  FitConfig f;
  f.max_epochs = c.count("trainer.max_epochs");
  f.batch_size = c.count("trainer.batch_size");
  f.train_per_epoch = c.count("trainer.train_per_epoch");
  f.val_per_epoch = c.count("trainer.val_per_epoch");
  f.adam.lr = c.real("trainer.lr");
  f.adam.beta1 = c.real("trainer.beta1");
  f.adam.beta2 = c.real("trainer.beta2");
  f.adam.eps = c.real("trainer.eps");
  f.plateau_patience = c.count("trainer.plateau_patience");
  f.plateau_factor = c.real("trainer.plateau_factor");
  f.early_stop_patience = c.count("trainer.early_stop_patience");
  f.validate();
  return f;
}

inline DetectorConfig detector_from(const RunConfig& c) {
  DetectorConfig d;
  d.n = c.count("sampling.n");
  d.threshold = c.real("detector.threshold");
  d.strict = c.flag("detector.strict");
  d.channels = c.channels("sampling.channels");
  d.validate();
  return d;
}

inline ProcessConfig process_from(const RunConfig& c) {
  ProcessConfig p;
  p.f_lo_hz = c.real("spectra.f_lo_hz");
  p.f_hi_hz = c.real("spectra.f_hi_hz");
  p.per_decade = static_cast<int>(c.integer("spectra.per_decade"));
  p.periods = c.real("spectra.periods");
  p.gamma = c.real("spectra.gamma");
  p.tau = static_cast<int>(c.integer("spectra.tau"));
  if (p.tau < 1 || p.tau > 4) throw ConfigError("spectra.tau must lie in 1..4");
  if (!(p.f_lo_hz > 0.0 && p.f_hi_hz >= p.f_lo_hz)) throw ConfigError("spectra.f_lo_hz/f_hi_hz must satisfy 0 < lo <= hi");
  if (p.per_decade < 1) throw ConfigError("spectra.per_decade must be >= 1");
  auto& m = p.mestimate;
  m.tolerance = c.real("impedance.tolerance");
  m.max_iterations = static_cast<int>(c.integer("impedance.max_iterations"));
  m.huber_x0 = c.real("impedance.huber_x0");
  m.thomson_x0 = c.real("impedance.thomson_x0");
  m.max_condition = c.real("impedance.max_condition");
  const auto& mode = c.str("impedance.scale_mode");
  if (mode == "chi_square")
    m.scale_mode = ScaleMode::chi_square;
  else if (mode == "normal")
    m.scale_mode = ScaleMode::normal;
  else
    throw ConfigError("impedance.scale_mode must be chi_square or normal");
  if (!(m.tolerance > 0.0) || m.max_iterations < 1) throw ConfigError("impedance.tolerance/max_iterations must be positive");
  p.ensemble.r = c.count("sampling.r");
  auto ref = parse_channel(c.str("detector.reference_channel"));
  if (!ref) throw ConfigError("detector.reference_channel: unknown channel '" + c.str("detector.reference_channel") + "'");
  p.ensemble.reference = *ref;
  p.ensemble.stacked = c.flag("detector.stacked_correlation");
  p.ensemble.max_iterations = static_cast<int>(c.integer("detector.align_iterations"));
  p.correlation_threshold = c.real("detector.correlation_threshold");
  return p;
}

}  // namespace sferic
