#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/spectra.hpp"
#include "sferic/timeseries.hpp"

namespace sferic {

using cplx = std::complex<double>;

/// E = H Z' + noise, one row per spectral estimate. Column order (Ex, Ey) and (Hx, Hy).
struct RegressionSystem {
  Eigen::MatrixX2cd e;
  Eigen::MatrixX2cd h;
  double frequency_hz = 0.0;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(h.rows()); }

  /// Rows whose H power is below `min_relative_h_power` times the largest row
  /// carry no input signal; they are dropped so that they cannot collapse the
  /// robust scale estimate.
  static RegressionSystem from(const SpectralEnsemble& ens, double min_relative_h_power = 1e-12) {
    double max_power = 0.0;
    for (const auto& r : ens.rows) max_power = std::max(max_power, std::norm(r[2]) + std::norm(r[3]));
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ens.rows.size(); ++i) {
      const auto& r = ens.rows[i];
      if (std::norm(r[2]) + std::norm(r[3]) > min_relative_h_power * max_power) keep.push_back(i);
    }
    RegressionSystem s;
    s.frequency_hz = ens.frequency_hz;
    const auto n = static_cast<Eigen::Index>(keep.size());
    s.e.resize(n, 2);
    s.h.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = ens.rows[keep[static_cast<std::size_t>(i)]];
      s.e(i, 0) = r[0];
      s.e(i, 1) = r[1];
      s.h(i, 0) = r[2];
      s.h(i, 1) = r[3];
    }
    return s;
  }
};

enum class ScaleMode { normal, chi_square };

inline constexpr double kNormalMad = 0.6745;
inline constexpr double kChiSquareMad = 0.44845;

struct ScaleEstimate {
  double beta_scale = 0.0;
  ScaleMode mode = ScaleMode::chi_square;
  bool degenerate = false;  // every residual identical: scale is zero
};

namespace detail {

inline double median_inplace(std::vector<double>& v) {
  const auto n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline double mad(std::vector<double> v) {
  const double m = median_inplace(v);
  for (auto& x : v) x = std::abs(x - m);
  return median_inplace(v);
}

}  // namespace detail

/// beta = median(|r - median(r)|) / sigma, sigma = 0.6745 (normal) or 0.44845 (chi-square).
inline ScaleEstimate mad_scale(std::span<const double> residuals, ScaleMode mode = ScaleMode::normal) {
  if (residuals.size() < 2) throw DataError("scale estimate needs at least 2 residuals");
  const double s = detail::mad({residuals.begin(), residuals.end()});
  const double sigma = mode == ScaleMode::normal ? kNormalMad : kChiSquareMad;
  return {s / sigma, mode, s == 0.0};
}

/// Complex residuals. Chi-square mode works on magnitudes |r| (Rayleigh for
/// Gaussian errors, whose MAD is 0.44845 per unit component std); normal mode
/// pools real and imaginary parts.
inline ScaleEstimate mad_scale(std::span<const cplx> residuals, ScaleMode mode = ScaleMode::chi_square) {
  if (residuals.size() < 2) throw DataError("scale estimate needs at least 2 residuals");
  std::vector<double> v;
  if (mode == ScaleMode::chi_square) {
    v.reserve(residuals.size());
    for (auto r : residuals) v.push_back(std::abs(r));
  } else {
    v.reserve(2 * residuals.size());
    for (auto r : residuals) {
      v.push_back(r.real());
      v.push_back(r.imag());
    }
  }
  return mad_scale(std::span<const double>(v), mode);
}

inline constexpr double kHuberThreshold = 1.5;
inline constexpr double kThomsonThreshold = 2.8;

inline double huber_weight(double x, double x0 = kHuberThreshold) noexcept {
  const double a = std::abs(x);
  return a <= x0 ? 1.0 : x0 / a;
}

inline double thomson_weight(double x, double x0 = kThomsonThreshold) noexcept {
  if (!std::isfinite(x0)) return 1.0;
  return std::exp(-std::exp(x0 * (std::abs(x) - x0)));
}

/// Z(i, j): row i is the E component (x, y), column j the H component.
struct ImpedanceTensor {
  Eigen::Matrix2cd z = Eigen::Matrix2cd::Zero();
  double frequency_hz = 0.0;

  struct ColumnDiagnostics {
    int huber_iterations = 0;
    int thomson_iterations = 0;
    bool huber_converged = false;
    bool thomson_converged = false;
    bool thomson_fallback = false;  // Thomson phase failed, Huber result kept
    double final_delta = 0.0;
    double scale = 0.0;
    std::vector<double> huber_wrss;  // per iteration; convergence is judged on these
    std::vector<double> thomson_wrss;
    std::vector<double> huber_objective;  // scale^2 * sum rho(|r| / scale), non-increasing
    std::vector<double> thomson_objective;
    std::vector<double> weights;
  };
  std::array<ColumnDiagnostics, 2> diagnostics;

  bool converged() const noexcept {
    return diagnostics[0].huber_converged && diagnostics[1].huber_converged && !diagnostics[0].thomson_fallback &&
           !diagnostics[1].thomson_fallback;
  }
};

struct MEstimateConfig {
  double tolerance = 0.01;
  int max_iterations = 50;  // per phase
  double huber_x0 = kHuberThreshold;
  double thomson_x0 = kThomsonThreshold;
  ScaleMode scale_mode = ScaleMode::chi_square;
  double max_condition = 1e10;
};

namespace detail {

inline double condition_number(const Eigen::MatrixX2cd& h) {
  Eigen::JacobiSVD<Eigen::MatrixX2cd> svd(h);
  const auto& s = svd.singularValues();
  if (s(1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(1);
}

inline void check_rank(const Eigen::MatrixX2cd& h, double max_condition) {
  if (h.rows() < 2) throw DataError("regression needs at least 2 rows, got " + std::to_string(h.rows()));
  const double cond = condition_number(h);
  if (!(cond <= max_condition))
    throw DataError("singular H system: condition number " + format_double(cond) + " exceeds " +
                    format_double(max_condition));
}

// Weighted complex least squares via Householder QR of diag(sqrt w) H.
inline Eigen::Vector2cd weighted_solve(const Eigen::MatrixX2cd& h, const Eigen::VectorXcd& y,
                                       std::span<const double> w) {
  Eigen::MatrixX2cd hw = h;
  Eigen::VectorXcd yw = y;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const double s = std::sqrt(w[static_cast<std::size_t>(i)]);
    hw.row(i) *= s;
    yw(i) *= s;
  }
  return hw.householderQr().solve(yw);
}

}  // namespace detail

/// Column-wise complex least squares: minimizes ||E - H Z^T||.
inline Eigen::Matrix2cd ols(const RegressionSystem& sys, double max_condition = 1e10) {
  detail::check_rank(sys.h, max_condition);
  auto qr = sys.h.householderQr();
  Eigen::Matrix2cd z;
  for (int j = 0; j < 2; ++j) z.row(j) = qr.solve(sys.e.col(j)).transpose();
  return z;
}

namespace detail {

struct IrlsOutcome {
  Eigen::Vector2cd z;
  int iterations = 0;
  bool converged = false;
  double delta = 0.0;
  double scale = 0.0;
  std::vector<double> wrss;
  std::vector<double> objective;
};

// rho(x) = integral of t w(t) over [0, x], tabulated; linear beyond the table,
// where t w(t) is constant (Huber) or zero (Thomson).
class RhoTable {
 public:
  template <class WeightFn>
  explicit RhoTable(WeightFn weight) : rho_(kSteps + 1, 0.0) {
    double prev = 0.0;
    for (std::size_t i = 1; i <= kSteps; ++i) {
      const double t = kStep * static_cast<double>(i), psi = t * weight(t);
      rho_[i] = rho_[i - 1] + 0.5 * kStep * (prev + psi);
      prev = psi;
    }
    tail_slope_ = prev;
  }

  double operator()(double x) const noexcept {
    x = std::abs(x);
    const double u = x / kStep;
    if (u >= static_cast<double>(kSteps)) return rho_.back() + tail_slope_ * (x - kMax);
    const auto i = static_cast<std::size_t>(u);
    return rho_[i] + (u - static_cast<double>(i)) * (rho_[i + 1] - rho_[i]);
  }

 private:
  static constexpr double kMax = 12.0;
  static constexpr std::size_t kSteps = 12000;
  static constexpr double kStep = kMax / kSteps;
  std::vector<double> rho_;
  double tail_slope_ = 0.0;
};

inline double floored_scale(const ScaleEstimate& s, const Eigen::VectorXcd& y) {
  if (!s.degenerate && s.beta_scale > 0.0) return s.beta_scale;
  const double ref = std::max(y.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return std::numeric_limits<double>::epsilon() * ref;
}

template <class WeightFn>
IrlsOutcome irls(const Eigen::MatrixX2cd& h, const Eigen::VectorXcd& y, Eigen::Vector2cd z0, WeightFn weight,
                 const MEstimateConfig& cfg) {
  const auto n = static_cast<std::size_t>(h.rows());
  IrlsOutcome out{z0, 0, false, 0.0, 0.0, {}, {}};
  std::vector<cplx> r(n);
  std::vector<double> w(n);
  auto residuals = [&](const Eigen::Vector2cd& z) {
    const Eigen::VectorXcd rr = y - h * z;
    for (std::size_t i = 0; i < n; ++i) r[i] = rr(static_cast<Eigen::Index>(i));
  };
  residuals(out.z);
  auto current_scale = [&] { return floored_scale(mad_scale(std::span<const cplx>(r), cfg.scale_mode), y); };
  // Re-estimated each iteration but never allowed to grow: with non-increasing weights
  // s^2 rho(r / s) shrinks with s, so the objective stays monotone and the scale settles.
  double scale = current_scale();
  // Residuals at rounding level count as converged.
  const double ref = y.size() ? y.cwiseAbs().maxCoeff() : 0.0;
  const double exact = static_cast<double>(n) * std::pow(1e3 * std::numeric_limits<double>::epsilon() * ref, 2);
  const RhoTable rho(weight);
  double prev = -1.0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = std::max(weight(std::abs(r[i]) / scale), std::numeric_limits<double>::min());
    out.z = weighted_solve(h, y, w);
    residuals(out.z);
    double wrss = 0.0, obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wrss += w[i] * std::norm(r[i]);
      obj += rho(std::abs(r[i]) / scale);
    }
    out.wrss.push_back(wrss);
    out.objective.push_back(obj * scale * scale);
    out.iterations = it;
    if (wrss <= exact) {
      out.delta = 0.0;
      out.converged = true;
      break;
    }
    if (prev >= 0.0) {
      out.delta = prev > 0.0 ? std::abs(wrss - prev) / prev : 0.0;
      if (out.delta <= cfg.tolerance) {
        out.converged = true;
        break;
      }
    }
    prev = wrss;
    scale = std::min(scale, current_scale());
  }
  out.scale = scale;
  return out;
}

}  // namespace detail

/// Robust impedance: OLS start, Huber IRLS to convergence, Thomson IRLS started
/// from the Huber solution, then one final weighted solve with weights from the
/// final residuals. Each E component is regressed independently.
inline ImpedanceTensor m_estimate(const RegressionSystem& sys, const MEstimateConfig& cfg = {}) {
  ImpedanceTensor out;
  out.frequency_hz = sys.frequency_hz;
  const Eigen::Matrix2cd z_ols = ols(sys, cfg.max_condition);
  const auto n = static_cast<std::size_t>(sys.h.rows());
  auto huber = [&](double x) { return huber_weight(x, cfg.huber_x0); };
  auto thomson = [&](double x) { return thomson_weight(x, cfg.thomson_x0); };

  for (int j = 0; j < 2; ++j) {
    const Eigen::VectorXcd y = sys.e.col(j);
    auto& diag = out.diagnostics[static_cast<std::size_t>(j)];
    const auto hub = detail::irls(sys.h, y, z_ols.row(j).transpose(), huber, cfg);
    diag.huber_iterations = hub.iterations;
    diag.huber_converged = hub.converged;
    diag.huber_wrss = hub.wrss;
    diag.huber_objective = hub.objective;

    const auto tho = detail::irls(sys.h, y, hub.z, thomson, cfg);
    diag.thomson_iterations = tho.iterations;
    diag.thomson_converged = tho.converged;
    diag.thomson_wrss = tho.wrss;
    diag.thomson_objective = tho.objective;

    const bool use_thomson = tho.converged && tho.z.allFinite();
    diag.thomson_fallback = !use_thomson;
    const auto& phase = use_thomson ? tho : hub;
    Eigen::Vector2cd z = phase.z;

    // Final solve with weights from the converged residuals.
    const Eigen::VectorXcd rr = y - sys.h * z;
    std::vector<cplx> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = rr(static_cast<Eigen::Index>(i));
    const double scale = detail::floored_scale(mad_scale(std::span<const cplx>(r), cfg.scale_mode), y);
    diag.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = std::abs(r[i]) / scale;
      diag.weights[i] = std::max(use_thomson ? thomson(x) : huber(x), std::numeric_limits<double>::min());
    }
    z = detail::weighted_solve(sys.h, y, diag.weights);
    diag.final_delta = phase.delta;
    diag.scale = scale;
    out.z.row(j) = z.transpose();
  }
  if (!out.z.allFinite()) throw ConvergenceError("impedance estimate is not finite");
  return out;
}

struct ResistivityPhase {
  double rho_xy = 0.0, rho_yx = 0.0;  // ohm m
  double phi_xy = 0.0, phi_yx = 0.0;  // degrees
};

/// rho_ij = 0.2 |Z_ij|^2 / F for Z in mV/(km nT). phi_xy = arg Z_xy;
/// phi_yx = arg(-Z_yx) so both lie in the first quadrant for a 1-D earth.
inline ResistivityPhase apparent_resistivity_phase(const Eigen::Matrix2cd& z, double frequency_hz) {
  if (!(frequency_hz > 0.0)) throw ConfigError("frequency must be positive");
  constexpr double kDeg = 180.0 / std::numbers::pi;
  ResistivityPhase out;
  out.rho_xy = 0.2 * std::norm(z(0, 1)) / frequency_hz;
  out.rho_yx = 0.2 * std::norm(z(1, 0)) / frequency_hz;
  out.phi_xy = std::arg(z(0, 1)) * kDeg;
  out.phi_yx = std::arg(-z(1, 0)) * kDeg;
  return out;
}

/// Phi = X^-1 Y for Z = X + iY, with the usual ellipse parameters.
struct PhaseTensor {
  Eigen::Matrix2d phi = Eigen::Matrix2d::Zero();
  double phi_max = 0.0;  // ellipse axes (singular values, phi_min signed by det)
  double phi_min = 0.0;
  double alpha = 0.0;     // degrees
  double beta_skew = 0.0; // degrees
};

inline std::optional<PhaseTensor> phase_tensor(const Eigen::Matrix2cd& z) {
  const Eigen::Matrix2d x = z.real();
  const Eigen::Matrix2d y = z.imag();
  const double det = x.determinant();
  const double scale = x.cwiseAbs().maxCoeff();
  if (!(std::abs(det) > 1e-12 * scale * scale) || scale == 0.0) return std::nullopt;
  PhaseTensor pt;
  pt.phi = x.inverse() * y;
  const auto& p = pt.phi;
  constexpr double kDeg = 180.0 / std::numbers::pi;
  const double pi1 = 0.5 * std::hypot(p(0, 0) - p(1, 1), p(0, 1) + p(1, 0));
  const double pi2 = 0.5 * std::hypot(p(0, 0) + p(1, 1), p(0, 1) - p(1, 0));
  pt.phi_max = pi2 + pi1;
  pt.phi_min = pi2 - pi1;
  pt.alpha = 0.5 * std::atan2(p(0, 1) + p(1, 0), p(0, 0) - p(1, 1)) * kDeg;
  pt.beta_skew = 0.5 * std::atan2(p(0, 1) - p(1, 0), p(0, 0) + p(1, 1)) * kDeg;
  return pt;
}

}  // namespace sferic
