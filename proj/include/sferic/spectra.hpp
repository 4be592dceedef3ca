#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/timeseries.hpp"

namespace sferic {

/// Log-spaced target frequencies, `per_decade` per decade from f_lo up to f_hi.
inline std::vector<double> log_frequencies(double f_lo = 700.0, double f_hi = 10400.0, int per_decade = 12) {
  if (!(f_lo > 0.0 && f_hi >= f_lo) || per_decade < 1)
    throw ConfigError("spectra frequency band must satisfy 0 < f_lo <= f_hi and per_decade >= 1");
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double f = f_lo * std::pow(10.0, static_cast<double>(k) / per_decade);
    if (f > f_hi * (1.0 + 1e-12)) break;
    out.push_back(f);
  }
  return out;
}

/// Evenly spaced analysis windows for one target frequency.
///
/// Window length is Np periods of F; the count follows Nw = floor(T F / (gamma Np)).
/// gamma acts as a stride fraction: 1 is back-to-back windows, 0.5 is 50% overlap.
/// Starts are spread evenly from 0 to (length - window) so every window fits.
struct WindowPlan {
  double frequency_hz = 0.0;
  double periods = 0.0;
  double gamma = 1.0;
  std::size_t window_length = 0;
  std::size_t count = 0;
  std::vector<std::size_t> starts;
};

inline WindowPlan plan_windows(double duration_s, double frequency_hz, double periods, double gamma,
                               double sample_rate_hz) {
  if (!(frequency_hz > 0.0)) throw ConfigError("window plan: frequency must be positive");
  if (!(periods >= 1.0)) throw ConfigError("spectra.periods must be >= 1");
  if (!(gamma > 0.0)) throw ConfigError("spectra.gamma must be positive");
  if (!(sample_rate_hz > 0.0) || !(duration_s > 0.0)) throw ConfigError("window plan: empty series");
  WindowPlan p;
  p.frequency_hz = frequency_hz;
  p.periods = periods;
  p.gamma = gamma;
  p.window_length = static_cast<std::size_t>(std::llround(periods / frequency_hz * sample_rate_hz));
  const auto length = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  if (p.window_length < 1 || p.window_length > length)
    throw DataError("window of " + std::to_string(p.window_length) + " samples at " + detail::format_double(frequency_hz) +
                    " Hz is longer than the series (" + std::to_string(length) + " samples)");
  // Small slack so exact products such as 10 * 1000 / 10 do not floor one short.
  p.count = static_cast<std::size_t>(std::floor(duration_s * frequency_hz / (gamma * periods) + 1e-9));
  if (p.count == 0) throw DataError("series too short for a single window at " + detail::format_double(frequency_hz) + " Hz");
  p.starts.resize(p.count);
  const std::size_t span = length - p.window_length;
  for (std::size_t i = 0; i < p.count; ++i)
    p.starts[i] = p.count == 1 ? 0 : (span * i + (p.count - 1) / 2) / (p.count - 1);
  return p;
}

/// Data tapers of one length. Slepian banks are unit-norm and orthogonal.
struct TaperBank {
  std::size_t length = 0;
  int time_bandwidth = 0;            // 0 for the boxcar
  std::vector<std::vector<double>> tapers;
  std::vector<double> concentrations;  // in-band energy fraction per taper
};

/// All-ones taper (not normalized).
inline TaperBank boxcar_taper(std::size_t length) {
  return TaperBank{length, 0, {std::vector<double>(length, 1.0)}, {1.0}};
}

namespace detail {

// Solves (T - shift I) x = b for symmetric tridiagonal T with Gaussian
// elimination and partial pivoting (LAPACK dgtsv scheme). b is overwritten.
inline void tridiagonal_shifted_solve(std::span<const double> diag, std::span<const double> off, double shift,
                                      std::vector<double>& b) {
  const std::size_t n = diag.size();
  std::vector<double> d(n), du(n, 0.0), du2(n, 0.0), dl(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i] = diag[i] - shift;
  for (std::size_t i = 0; i + 1 < n; ++i) du[i] = dl[i] = off[i];
  const double tiny = 1e-300;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (std::abs(d[i]) < tiny) d[i] = tiny;
      const double f = dl[i] / d[i];
      d[i + 1] -= f * du[i];
      b[i + 1] -= f * b[i];
      dl[i] = 0.0;
    } else {
      const double f = d[i] / dl[i];
      d[i] = dl[i];
      const double t = d[i + 1];
      d[i + 1] = du[i] - f * t;
      du2[i] = (i + 2 < n) ? du[i + 1] : 0.0;
      if (i + 2 < n) du[i + 1] = -f * du2[i];
      du[i] = t;
      std::swap(b[i], b[i + 1]);
      b[i + 1] -= f * b[i];
    }
  }
  if (std::abs(d[n - 1]) < tiny) d[n - 1] = tiny;
  b[n - 1] /= d[n - 1];
  if (n > 1) b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
  for (std::size_t i = n - 2; i-- > 0;) b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
}

// v' A v for the sinc (prolate concentration) kernel A_ij = sin(2 pi W (i-j)) / (pi (i-j)).
inline double sinc_quadratic_form(std::span<const double> v, double w) {
  const std::size_t n = v.size();
  double acc = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    double r = 0.0;
    for (std::size_t i = 0; i + m < n; ++i) r += v[i] * v[i + m];
    const double a = m == 0 ? 2.0 * w : std::sin(2.0 * std::numbers::pi * w * m) / (std::numbers::pi * m);
    acc += (m == 0 ? 1.0 : 2.0) * a * r;
  }
  return acc;
}

}  // namespace detail

/// Discrete prolate spheroidal tapers with half-bandwidth W = tau / length.
/// Returns K = max(1, 2 tau - 1) tapers, computed as the leading eigenvectors
/// of the commuting tridiagonal matrix, then refined by inverse iteration.
inline TaperBank slepian_tapers(std::size_t length, int tau) {
  if (tau < 1 || tau > 4) throw ConfigError("spectra.tau must be 1, 2, 3 or 4");
  if (length < 8) throw ConfigError("Slepian taper length must be >= 8, got " + std::to_string(length));
  const std::size_t n = length;
  const std::size_t k_tapers = static_cast<std::size_t>(std::max(1, 2 * tau - 1));
  const double w = static_cast<double>(tau) / static_cast<double>(n);
  const double c = std::cos(2.0 * std::numbers::pi * w);

  Eigen::VectorXd diag(n), off(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = 0.5 * static_cast<double>(n - 1) - static_cast<double>(i);
    diag[static_cast<Eigen::Index>(i)] = h * h * c;
  }
  for (std::size_t i = 1; i < n; ++i)
    off[static_cast<Eigen::Index>(i - 1)] = 0.5 * static_cast<double>(i) * static_cast<double>(n - i);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending

  std::span<const double> dspan(diag.data(), n), ospan(off.data(), n - 1);
  TaperBank bank{length, tau, {}, {}};
  for (std::size_t k = 0; k < k_tapers; ++k) {
    const double lambda = ev[static_cast<Eigen::Index>(n - 1 - k)];
    const double shift = lambda + 1e-10 * std::max(1.0, std::abs(lambda));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * std::sin(0.37 * static_cast<double>(i) + static_cast<double>(k));
    for (int it = 0; it < 4; ++it) {
      detail::tridiagonal_shifted_solve(dspan, ospan, shift, v);
      for (const auto& u : bank.tapers) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += u[i] * v[i];
        for (std::size_t i = 0; i < n; ++i) v[i] -= dot * u[i];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
    }
    // Sign convention: even tapers have positive sum, odd tapers a positive leading lobe.
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += (k % 2 == 0) ? v[i] : (0.5 * static_cast<double>(n - 1) - static_cast<double>(i)) * v[i];
    if (s < 0.0)
      for (auto& x : v) x = -x;
    bank.concentrations.push_back(detail::sinc_quadratic_form(v, w));
    bank.tapers.push_back(std::move(v));
  }
  return bank;
}

/// Thread-safe memo of taper banks keyed by (length, tau).
class TaperCache {
 public:
  std::shared_ptr<const TaperBank> get(std::size_t length, int tau) {
    const auto key = std::make_pair(length, tau);
    {
      std::shared_lock lock(mutex_);
      if (auto it = banks_.find(key); it != banks_.end()) return it->second;
    }
    auto bank = std::make_shared<const TaperBank>(tau == 0 ? boxcar_taper(length) : slepian_tapers(length, tau));
    std::unique_lock lock(mutex_);
    return banks_.emplace(key, std::move(bank)).first->second;
  }

 private:
  std::shared_mutex mutex_;
  std::map<std::pair<std::size_t, int>, std::shared_ptr<const TaperBank>> banks_;
};

struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class SpectralMode { even, sferic };

/// Rows of single-frequency DFT coefficients, one per (segment, taper);
/// column order Ex, Ey, Hx, Hy.
struct SpectralEnsemble {
  double frequency_hz = 0.0;
  std::vector<std::array<std::complex<double>, 4>> rows;
};

inline std::vector<Segment> even_segments(const WindowPlan& plan) {
  std::vector<Segment> out;
  out.reserve(plan.starts.size());
  for (auto s : plan.starts) out.push_back({s, plan.window_length});
  return out;
}

/// Windows of `window_length` centered on each sferic, clipped at the record
/// edges (clipped segments come out shorter and are tapered at their own length).
inline std::vector<Segment> centered_segments(std::span<const std::size_t> centers, std::size_t window_length,
                                              std::size_t series_length) {
  std::vector<Segment> out;
  for (auto c : centers) {
    const auto half = window_length / 2;
    const std::size_t lo = c >= half ? c - half : 0;
    const std::size_t hi = std::min(series_length, c + (window_length - half));
    if (hi > lo) out.push_back({lo, hi - lo});
  }
  return out;
}

/// Direct single-frequency DFT  X = sum_t w[t] x[start + t] exp(-i 2 pi F t / fs)
/// for every segment and taper. Segments shorter than 8 samples get a boxcar.
inline SpectralEnsemble coefficients(const MultiChannelSeries& series, double frequency_hz,
                                     std::span<const Segment> segments, int tau, TaperCache& cache) {
  series.require_full();
  SpectralEnsemble out{frequency_hz, {}};
  const double fs = series.sample_rate_hz();
  std::array<std::span<const double>, 4> ch{series[Channel::Ex], series[Channel::Ey], series[Channel::Hx],
                                            series[Channel::Hy]};
  std::size_t cached_len = 0;
  std::vector<std::complex<double>> phasor;
  for (const auto& seg : segments) {
    if (seg.length == 0) continue;
    if (seg.start + seg.length > series.length())
      throw DataError("spectral segment [" + std::to_string(seg.start) + ", " + std::to_string(seg.start + seg.length) +
                      ") exceeds series length " + std::to_string(series.length()));
    const auto bank = cache.get(seg.length, seg.length >= 8 ? tau : 0);
    if (seg.length != cached_len) {
      phasor.resize(seg.length);
      for (std::size_t t = 0; t < seg.length; ++t) {
        const double arg = -2.0 * std::numbers::pi * frequency_hz * static_cast<double>(t) / fs;
        phasor[t] = {std::cos(arg), std::sin(arg)};
      }
      cached_len = seg.length;
    }
    for (const auto& taper : bank->tapers) {
      std::array<std::complex<double>, 4> row{};
      for (std::size_t c = 0; c < 4; ++c) {
        const double* x = ch[c].data() + seg.start;
        double re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < seg.length; ++t) {
          const double v = taper[t] * x[t];
          re += v * phasor[t].real();
          im += v * phasor[t].imag();
        }
        row[c] = {re, im};
      }
      out.rows.push_back(row);
    }
  }
  return out;
}

inline SpectralEnsemble coefficients(const MultiChannelSeries& series, const WindowPlan& plan, int tau,
                                     TaperCache& cache) {
  const auto segs = even_segments(plan);
  return coefficients(series, plan.frequency_hz, segs, tau, cache);
}

}  // namespace sferic
