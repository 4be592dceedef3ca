#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/fft.hpp"
#include "sferic/rng.hpp"
#include "sferic/timeseries.hpp"

namespace sferic {

/// Vacuum permeability, H/m. With this value rho = 0.2 |Z|^2 / f holds
/// exactly for Z in mV/(km nT).
inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;

// SI impedance (ohm) -> field units mV/(km nT).
inline constexpr double kSiToFieldImpedance = 1.0 / (kMu0 * 1000.0);

/// Horizontally layered earth; the last layer is a half-space.
struct EarthModel1D {
  std::vector<double> resistivities;  // ohm m, top to bottom
  std::vector<double> thicknesses;    // m, one per non-basement layer

  void validate() const {
    if (resistivities.empty()) throw ConfigError("synth.earth.resistivities: at least one layer is required");
    if (thicknesses.size() + 1 != resistivities.size())
      throw ConfigError("synth.earth.thicknesses: expected " + std::to_string(resistivities.size() - 1) +
                        " values (one fewer than synth.earth.resistivities), got " + std::to_string(thicknesses.size()));
    for (double r : resistivities)
      if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("synth.earth.resistivities: values must be positive");
    for (double h : thicknesses)
      if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("synth.earth.thicknesses: values must be positive");
  }

  static EarthModel1D halfspace(double rho) { return {{rho}, {}}; }
};

/// Surface impedance of a 1-D earth at frequency f (Hz), in mV/(km nT),
/// e^{+i omega t} convention, so a half-space has phase +45 deg.
inline std::complex<double> surface_impedance(const EarthModel1D& earth, double f) {
  if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("impedance frequency must be positive");
  using C = std::complex<double>;
  const C iwm(0.0, 2.0 * std::numbers::pi * f * kMu0);
  const auto n = earth.resistivities.size();
  C z = std::sqrt(iwm * earth.resistivities[n - 1]);
  for (std::size_t j = n - 1; j-- > 0;) {
    const double rho = earth.resistivities[j];
    const C intrinsic = std::sqrt(iwm * rho);
    const C k = std::sqrt(iwm / rho);
    // tanh(kh) written with exp(-2kh); Re(kh) > 0 so this never overflows.
    const C e = std::exp(-2.0 * k * earth.thicknesses[j]);
    const C t = (1.0 - e) / (1.0 + e);
    z = intrinsic * (z + intrinsic * t) / (intrinsic + z * t);
  }
  return z * kSiToFieldImpedance;
}

/// Damped-sinusoid transient
///   a * exp(-(t - t0)/decay) * sin(2 pi carrier (t - t0)) * (1 - exp(-onset (t - t0))),  t >= t0
/// scaled so its largest excursion equals peak_amplitude. The onset t0 sits
/// decay/2 before the catalog center, which places the center near the
/// energy centroid.
struct SfericModel {
  double peak_amplitude = 1.0;     // nT
  double carrier_hz = 3000.0;      // [700, 10400]
  double decay_s = 3.0e-4;
  double onset_sharpness = 2.0e4;  // 1/s

  void validate() const {
    if (!std::isfinite(peak_amplitude)) throw ConfigError("sferic amplitude must be finite");
    if (!(carrier_hz >= 700.0 && carrier_hz <= 10400.0))
      throw ConfigError("sferic carrier must lie in [700, 10400] Hz");
    if (!(decay_s > 0.0)) throw ConfigError("sferic decay must be positive");
    if (!(onset_sharpness > 0.0)) throw ConfigError("sferic onset sharpness must be positive");
  }

  double onset_offset_s() const noexcept { return 0.5 * decay_s; }
  double support_s() const noexcept { return 20.0 * decay_s; }

  // Unnormalized shape at time u since onset.
  double shape(double u) const noexcept {
    if (u < 0.0) return 0.0;
    return std::exp(-u / decay_s) * std::sin(2.0 * std::numbers::pi * carrier_hz * u) *
           (1.0 - std::exp(-onset_sharpness * u));
  }

  double shape_peak() const noexcept {
    double m = 0.0;
    constexpr int kGrid = 8192;
    const double span = 10.0 * decay_s;
    for (int i = 0; i <= kGrid; ++i) m = std::max(m, std::abs(shape(span * i / kGrid)));
    return m;
  }

  // Waveform value at time dt relative to the catalog center.
  double value(double dt, double inv_peak) const noexcept {
    return peak_amplitude * inv_peak * shape(dt + onset_offset_s());
  }
};

struct SfericEvent {
  double time_s = 0.0;  // center
  SfericModel model;
  double azimuth_rad = 0.0;  // projection onto (Hx, Hy) = (cos, sin)
};

/// Additive measurement / cultural noise, independent per channel.
struct NoiseSpec {
  double white_std = 0.0;                   // nT on H channels
  double powerline_hz = 50.0;
  std::vector<double> harmonic_amplitudes;  // nT, harmonic k+1 of powerline_hz
  double impulse_rate_hz = 0.0;             // Poisson rate of rectangular bursts
  double impulse_amplitude = 0.0;           // nT
  double impulse_width_s = 2.0e-4;
  double e_gain = 500.0;                    // E-channel noise = e_gain x H-channel noise level

  void validate() const {
    auto nonneg = [](double v, const char* key) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + ": must be finite and >= 0");
    };
    nonneg(white_std, "noise.white_std");
    nonneg(powerline_hz, "noise.powerline_hz");
    for (double a : harmonic_amplitudes) nonneg(a, "noise.harmonic_amplitudes");
    nonneg(impulse_rate_hz, "noise.impulse_rate_hz");
    nonneg(impulse_amplitude, "noise.impulse_amplitude");
    nonneg(impulse_width_s, "noise.impulse_width_s");
    nonneg(e_gain, "noise.e_gain");
  }
};

struct SynthResult {
  MultiChannelSeries series;
  SfericCatalog catalog;
};

/// Applies the earth response to H: Ex = Z Hy, Ey = -Z Hx (1-D tensor with
/// Zxy = Z, Zyx = -Z), via zero-padded transform, multiply, inverse.
inline std::pair<std::vector<double>, std::vector<double>> apply_earth_response(const EarthModel1D& earth,
                                                                               std::span<const double> hx,
                                                                               std::span<const double> hy,
                                                                               double sample_rate_hz) {
  const std::size_t len = hx.size();
  std::vector<double> ex(len, 0.0), ey(len, 0.0);
  if (len == 0) return {ex, ey};
  const std::size_t m = detail::next_pow2(2 * len);
  detail::RealFft fft(m);
  auto shx = fft.forward(hx);
  auto shy = fft.forward(hy);
  for (std::size_t k = 0; k < shx.size(); ++k) {
    if (k == 0) {
      shx[k] = shy[k] = 0.0;
      continue;
    }
    const double f = sample_rate_hz * static_cast<double>(k) / static_cast<double>(m);
    const auto z = surface_impedance(earth, f);
    const auto x = shx[k];
    shx[k] = z * shy[k];  // -> Ex
    shy[k] = -z * x;      // -> Ey
  }
  auto tx = fft.inverse(shx);
  auto ty = fft.inverse(shy);
  std::copy_n(tx.begin(), len, ex.begin());
  std::copy_n(ty.begin(), len, ey.begin());
  return {ex, ey};
}

inline void add_noise(std::vector<double>& x, const NoiseSpec& noise, double gain, double sample_rate_hz, Rng& rng) {
  const auto len = x.size();
  if (noise.white_std > 0.0)
    for (auto& v : x) v += gain * noise.white_std * standard_normal(rng);
  for (std::size_t h = 0; h < noise.harmonic_amplitudes.size(); ++h) {
    const double a = gain * noise.harmonic_amplitudes[h];
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi * noise.powerline_hz * static_cast<double>(h + 1) / sample_rate_hz;
    if (a == 0.0) continue;
    for (std::size_t i = 0; i < len; ++i) x[i] += a * std::sin(w * static_cast<double>(i) + phase);
  }
  if (noise.impulse_rate_hz > 0.0 && noise.impulse_amplitude > 0.0) {
    const double duration = static_cast<double>(len) / sample_rate_hz;
    const auto width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(noise.impulse_width_s * sample_rate_hz)));
    for (double t = exponential(rng, noise.impulse_rate_hz); t < duration; t += exponential(rng, noise.impulse_rate_hz)) {
      const double a = gain * noise.impulse_amplitude * (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.5, 1.0);
      const auto start = static_cast<std::size_t>(t * sample_rate_hz);
      for (std::size_t i = start; i < std::min(len, start + width); ++i) x[i] += a;
    }
  }
}

/// Generates a four-channel series with the given sferics injected and the
/// exact injected centers as catalog. `background_std` adds a white natural
/// source field to Hx/Hy before the earth response (so it is coherent between
/// E and H, unlike NoiseSpec). Pure function of its arguments.
inline SynthResult synthesize(const EarthModel1D& earth, std::vector<SfericEvent> sferics, const NoiseSpec& noise,
                              double duration_s, double sample_rate_hz, std::uint64_t seed,
                              double background_std = 0.0) {
  earth.validate();
  noise.validate();
  if (!(sample_rate_hz > 0.0)) throw ConfigError("synth.sample_rate_hz must be positive");
  if (!(duration_s > 0.0)) throw ConfigError("synth.duration_s must be positive");
  const auto len = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  std::sort(sferics.begin(), sferics.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });

  std::vector<double> hx(len, 0.0), hy(len, 0.0);
  SfericCatalog catalog;
  for (const auto& ev : sferics) {
    ev.model.validate();
    if (!(ev.time_s >= 0.0) || ev.time_s * sample_rate_hz >= static_cast<double>(len))
      throw ConfigError("sferic time " + detail::format_double(ev.time_s) + " s outside series duration " +
                        detail::format_double(duration_s) + " s");
    const auto center = static_cast<std::size_t>(std::llround(ev.time_s * sample_rate_hz));
    if (center >= len) throw ConfigError("sferic time outside series duration");
    if (catalog.centers.empty() || center > catalog.centers.back()) catalog.centers.push_back(center);
    const double inv_peak = 1.0 / ev.model.shape_peak();
    const double c = std::cos(ev.azimuth_rad), s = std::sin(ev.azimuth_rad);
    const double t_first = ev.time_s - ev.model.onset_offset_s();
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::ceil(t_first * sample_rate_hz)));
    const auto i1 = std::min(len, static_cast<std::size_t>((t_first + ev.model.support_s()) * sample_rate_hz) + 1);
    for (std::size_t i = i0; i < i1; ++i) {
      const double v = ev.model.value(static_cast<double>(i) / sample_rate_hz - ev.time_s, inv_peak);
      hx[i] += c * v;
      hy[i] += s * v;
    }
  }

  if (!(background_std >= 0.0) || !std::isfinite(background_std))
    throw ConfigError("synth.background_std must be finite and >= 0");
  if (background_std > 0.0) {
    Rng bg(derive_seed(seed, 0x6267ULL));
    for (std::size_t i = 0; i < len; ++i) {
      hx[i] += background_std * standard_normal(bg);
      hy[i] += background_std * standard_normal(bg);
    }
  }

  auto [ex, ey] = apply_earth_response(earth, hx, hy, sample_rate_hz);

  Rng rng(derive_seed(seed, 0x6e6f697365ULL));
  add_noise(ex, noise, noise.e_gain, sample_rate_hz, rng);
  add_noise(ey, noise, noise.e_gain, sample_rate_hz, rng);
  add_noise(hx, noise, 1.0, sample_rate_hz, rng);
  add_noise(hy, noise, 1.0, sample_rate_hz, rng);

  MultiChannelSeries::ChannelMap map;
  map.emplace(Channel::Ex, std::move(ex));
  map.emplace(Channel::Ey, std::move(ey));
  map.emplace(Channel::Hx, std::move(hx));
  map.emplace(Channel::Hy, std::move(hy));
  return {MultiChannelSeries(sample_rate_hz, std::move(map)), std::move(catalog)};
}

/// Random sferic population: Poisson arrivals with a dead time, log-uniform
/// amplitudes, uniform carriers, decays and azimuths.
struct SfericPopulation {
  double rate_hz = 30.0;
  double min_separation_s = 5.0e-3;
  double edge_margin_s = 2.0e-3;
  double amplitude_min = 1.0;
  double amplitude_max = 10.0;
  double carrier_min_hz = 1500.0;
  double carrier_max_hz = 6000.0;
  double decay_min_s = 2.0e-4;
  double decay_max_s = 4.0e-4;
  double onset_sharpness = 2.0e4;
  double azimuth_center_deg = 0.0;
  double azimuth_spread_deg = 180.0;  // azimuths uniform in center +- spread

  void validate() const {
    if (!(rate_hz >= 0.0)) throw ConfigError("synth.sferic_rate_hz must be >= 0");
    if (!(amplitude_min > 0.0 && amplitude_max >= amplitude_min))
      throw ConfigError("synth.amplitude_min/max must satisfy 0 < min <= max");
    if (!(carrier_min_hz >= 700.0 && carrier_max_hz <= 10400.0 && carrier_min_hz <= carrier_max_hz))
      throw ConfigError("synth.carrier_min_hz/max_hz must lie in [700, 10400] with min <= max");
    if (!(decay_min_s > 0.0 && decay_max_s >= decay_min_s))
      throw ConfigError("synth.decay_min_s/max_s must satisfy 0 < min <= max");
    if (!(min_separation_s >= 0.0) || !(edge_margin_s >= 0.0))
      throw ConfigError("synth.min_separation_s / edge_margin_s must be >= 0");
    if (!(azimuth_spread_deg >= 0.0 && azimuth_spread_deg <= 180.0))
      throw ConfigError("synth.azimuth_spread_deg must lie in [0, 180]");
  }
};

inline std::vector<SfericEvent> draw_sferics(const SfericPopulation& pop, double duration_s, std::uint64_t seed) {
  pop.validate();
  std::vector<SfericEvent> out;
  if (pop.rate_hz <= 0.0) return out;
  Rng rng(derive_seed(seed, 0x73666572ULL));
  double t = pop.edge_margin_s;
  while (true) {
    t += exponential(rng, pop.rate_hz);
    if (t >= duration_s - pop.edge_margin_s) break;
    SfericEvent ev;
    ev.time_s = t;
    ev.model.peak_amplitude =
        pop.amplitude_min * std::pow(pop.amplitude_max / pop.amplitude_min, uniform01(rng));
    ev.model.carrier_hz = uniform(rng, pop.carrier_min_hz, pop.carrier_max_hz);
    ev.model.decay_s = uniform(rng, pop.decay_min_s, pop.decay_max_s);
    ev.model.onset_sharpness = pop.onset_sharpness;
    ev.azimuth_rad = (pop.azimuth_center_deg + uniform(rng, -pop.azimuth_spread_deg, pop.azimuth_spread_deg)) *
                     std::numbers::pi / 180.0;
    out.push_back(ev);
    t += pop.min_separation_s;
  }
  return out;
}

}  // namespace sferic
