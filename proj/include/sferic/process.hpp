#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sferic/detector.hpp"
#include "sferic/impedance.hpp"
#include "sferic/spectra.hpp"
#include "sferic/timeseries.hpp"

namespace sferic {

struct ProcessConfig {
  double f_lo_hz = 700.0;
  double f_hi_hz = 10400.0;
  int per_decade = 12;
  double periods = 24.0;
  double gamma = 1.0;
  int tau = 1;
  MEstimateConfig mestimate;
  EnsembleConfig ensemble;
  double correlation_threshold = 0.7;
  bool correlation_filter = true;
};

struct FrequencyEstimate {
  double frequency_hz = 0.0;
  SpectralMode mode = SpectralMode::even;
  std::size_t segments = 0;
  std::size_t rows = 0;
  std::optional<ImpedanceTensor> z;
  ResistivityPhase rp;
  std::optional<PhaseTensor> pt;
  std::string error;  // why no estimate, when z is empty

  bool converged() const { return z && z->converged(); }
};

inline const char* to_string(SpectralMode m) { return m == SpectralMode::even ? "even" : "sferic"; }

/// Sferic centers for sferic-mode windows: the ensemble of detected peaks,
/// aligned, and (optionally) correlation filtered.
inline SfericEnsemble sferic_ensemble(const MultiChannelSeries& series, std::span<const std::size_t> peaks,
                                      const ProcessConfig& cfg) {
  auto e = extract_ensemble(series, peaks, cfg.ensemble);
  if (cfg.correlation_filter && !e.empty()) e = correlation_filter(std::move(e), cfg.correlation_threshold);
  return e;
}

/// Impedance at every planned frequency. Even mode uses the evenly spaced
/// plan windows; sferic mode uses plan-length windows centered on `centers`.
/// Frequencies without a usable system carry an error string instead of Z.
inline std::vector<FrequencyEstimate> estimate_impedance(const MultiChannelSeries& series, SpectralMode mode,
                                                         std::span<const std::size_t> centers,
                                                         const ProcessConfig& cfg, TaperCache& cache) {
  series.require_full();
  std::vector<FrequencyEstimate> out;
  for (double f : log_frequencies(cfg.f_lo_hz, cfg.f_hi_hz, cfg.per_decade)) {
    FrequencyEstimate fe;
    fe.frequency_hz = f;
    fe.mode = mode;
    try {
      const auto plan = plan_windows(series.duration_s(), f, cfg.periods, cfg.gamma, series.sample_rate_hz());
      const auto segs = mode == SpectralMode::even ? even_segments(plan)
                                                   : centered_segments(centers, plan.window_length, series.length());
      fe.segments = segs.size();
      const auto sys = RegressionSystem::from(coefficients(series, f, segs, cfg.tau, cache));
      fe.rows = sys.rows();
      auto z = m_estimate(sys, cfg.mestimate);
      fe.rp = apparent_resistivity_phase(z.z, f);
      fe.pt = phase_tensor(z.z);
      fe.z = std::move(z);
    } catch (const DataError& e) {
      fe.error = e.what();
    } catch (const ConvergenceError& e) {
      fe.error = e.what();
    }
    out.push_back(std::move(fe));
  }
  return out;
}

}  // namespace sferic
