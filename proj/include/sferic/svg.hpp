#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "sferic/process.hpp"

namespace sferic::svg {

// Fixed-precision formatting keeps the output byte-stable.
inline std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Axis {
  double lo, hi;      // data range (log10 when log)
  double p0, p1;      // pixel range
  bool log = false;
  double map(double v) const {
    const double x = log ? std::log10(v) : v;
    return p0 + (x - lo) / (hi - lo) * (p1 - p0);
  }
};

struct Series {
  std::string label;
  std::string color;
  bool filled = true;
  std::vector<std::pair<double, double>> points;
};

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\" font-family=\"sans-serif\">" + s + "</text>\n";
}

inline std::string panel(const Axis& ax, const Axis& ay, const std::string& ylabel, const std::vector<Series>& series,
                         bool legend) {
  std::string out;
  out += "<rect x=\"" + num(ax.p0) + "\" y=\"" + num(ay.p1) + "\" width=\"" + num(ax.p1 - ax.p0) + "\" height=\"" +
         num(ay.p0 - ay.p1) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double d = std::ceil(ax.lo); d <= ax.hi + 1e-9; d += 1.0) {
    const double x = ax.p0 + (d - ax.lo) / (ax.hi - ax.lo) * (ax.p1 - ax.p0);
    out += "<line x1=\"" + num(x) + "\" y1=\"" + num(ay.p0) + "\" x2=\"" + num(x) + "\" y2=\"" + num(ay.p1) +
           "\" stroke=\"#ccc\"/>\n";
    out += text(x, ay.p0 + 16, "1e" + std::to_string(static_cast<int>(d)));
  }
  const double ystep = ay.log ? 1.0 : (ay.hi - ay.lo) / 6.0;
  for (double d = ay.log ? std::ceil(ay.lo) : ay.lo; d <= ay.hi + 1e-9; d += ystep) {
    const double y = ay.p0 + (d - ay.lo) / (ay.hi - ay.lo) * (ay.p1 - ay.p0);
    out += "<line x1=\"" + num(ax.p0) + "\" y1=\"" + num(y) + "\" x2=\"" + num(ax.p1) + "\" y2=\"" + num(y) +
           "\" stroke=\"#eee\"/>\n";
    out += text(ax.p0 - 6, y + 4, ay.log ? "1e" + std::to_string(static_cast<int>(d)) : num(d, 0), "end");
  }
  out += text(ax.p0 - 48, (ay.p0 + ay.p1) / 2, ylabel, "middle");
  double ly = ay.p1 + 14;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!(y > 0.0 || !ay.log)) continue;
      const double px = ax.map(x), py = ay.map(y);
      if (py < ay.p1 - 1 || py > ay.p0 + 1) continue;
      out += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) + "\" r=\"3.5\" stroke=\"" + s.color + "\" fill=\"" +
             (s.filled ? s.color : std::string("none")) + "\"/>\n";
    }
    if (legend) {
      out += "<circle cx=\"" + num(ax.p1 - 110) + "\" cy=\"" + num(ly - 4) + "\" r=\"3.5\" stroke=\"" + s.color +
             "\" fill=\"" + (s.filled ? s.color : std::string("none")) + "\"/>\n";
      out += text(ax.p1 - 100, ly, s.label, "start", 11);
      ly += 14;
    }
  }
  return out;
}

inline std::vector<Series> curves(const std::vector<std::vector<FrequencyEstimate>>& modes, bool phase) {
  std::vector<Series> out;
  const char* colors[2][2] = {{"#1f77b4", "#d62728"}, {"#2ca02c", "#ff7f0e"}};
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (modes[m].empty()) continue;
    const std::string mode = to_string(modes[m].front().mode);
    Series xy{mode + " xy", colors[m % 2][0], m % 2 == 0, {}}, yx{mode + " yx", colors[m % 2][1], m % 2 == 0, {}};
    for (const auto& fe : modes[m]) {
      if (!fe.z) continue;
      xy.points.emplace_back(fe.frequency_hz, phase ? fe.rp.phi_xy : fe.rp.rho_xy);
      yx.points.emplace_back(fe.frequency_hz, phase ? fe.rp.phi_yx : fe.rp.rho_yx);
    }
    out.push_back(std::move(xy));
    out.push_back(std::move(yx));
  }
  return out;
}

inline std::pair<double, double> frequency_range(const std::vector<std::vector<FrequencyEstimate>>& modes) {
  double lo = 1e300, hi = 0.0;
  for (const auto& m : modes)
    for (const auto& fe : m) lo = std::min(lo, fe.frequency_hz), hi = std::max(hi, fe.frequency_hz);
  if (hi <= 0.0) return {2.0, 4.0};
  return {std::floor(std::log10(lo) * 4.0) / 4.0, std::ceil(std::log10(hi) * 4.0) / 4.0};
}

/// Apparent resistivity and phase against frequency, one marker style per mode.
inline std::string rho_phase(const std::vector<std::vector<FrequencyEstimate>>& modes, const std::string& title) {
  const auto [flo, fhi] = frequency_range(modes);
  double rlo = 1e300, rhi = 0.0;
  for (const auto& m : modes)
    for (const auto& fe : m)
      if (fe.z)
        for (double r : {fe.rp.rho_xy, fe.rp.rho_yx})
          if (r > 0.0) rlo = std::min(rlo, r), rhi = std::max(rhi, r);
  if (rhi <= 0.0) rlo = 1.0, rhi = 1000.0;
  Axis ax1{flo, fhi, 80, 620, true}, ay1{std::floor(std::log10(rlo)) - 0.0, std::ceil(std::log10(rhi) + 1e-9), 290, 40, true};
  if (ay1.hi <= ay1.lo) ay1.hi = ay1.lo + 1;
  Axis ax2 = ax1, ay2{0.0, 90.0, 540, 330, false};
  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"590\" viewBox=\"0 0 660 590\">\n"
      "<rect width=\"660\" height=\"590\" fill=\"white\"/>\n";
  out += text(350, 24, title, "middle", 14);
  out += panel(ax1, ay1, "rho_a (ohm m)", curves(modes, false), true);
  out += panel(ax2, ay2, "phase (deg)", curves(modes, true), false);
  out += text(350, 580, "frequency (Hz)");
  return out + "</svg>\n";
}

/// Phase-tensor ellipses along a log-frequency axis, one row per mode. Axes
/// are arctan of the principal values, the major axis is rotated by alpha - beta,
/// fill encodes arctan(phi_min).
inline std::string phase_tensor_ellipses(const std::vector<std::vector<FrequencyEstimate>>& modes,
                                         const std::string& title) {
  const auto [flo, fhi] = frequency_range(modes);
  const double row_h = 120.0;
  const double height = 70.0 + row_h * static_cast<double>(std::max<std::size_t>(1, modes.size())) + 40.0;
  Axis ax{flo, fhi, 100, 640, true};
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"680\" height=\"" + num(height, 0) +
                    "\" viewBox=\"0 0 680 " + num(height, 0) + "\">\n<rect width=\"680\" height=\"" + num(height, 0) +
                    "\" fill=\"white\"/>\n";
  out += text(370, 24, title, "middle", 14);
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const double cy = 70.0 + row_h * (static_cast<double>(m) + 0.5);
    if (!modes[m].empty()) out += text(60, cy + 4, to_string(modes[m].front().mode), "end");
    out += "<line x1=\"" + num(ax.p0) + "\" y1=\"" + num(cy) + "\" x2=\"" + num(ax.p1) + "\" y2=\"" + num(cy) +
           "\" stroke=\"#eee\"/>\n";
    for (const auto& fe : modes[m]) {
      if (!fe.pt) continue;
      const double amax = std::atan(fe.pt->phi_max) * kDeg, amin = std::atan(fe.pt->phi_min) * kDeg;
      const double scale = 22.0 / 90.0;
      const double rx = std::max(0.5, std::abs(amax) * scale), ry = std::max(0.5, std::abs(amin) * scale);
      const int shade = static_cast<int>(std::clamp(amin / 90.0, 0.0, 1.0) * 255.0);
      char color[16];
      std::snprintf(color, sizeof color, "#%02x%02x%02x", shade, 64, 255 - shade);
      out += "<ellipse cx=\"0\" cy=\"0\" rx=\"" + num(rx) + "\" ry=\"" + num(ry) + "\" fill=\"" + color +
             "\" stroke=\"black\" stroke-width=\"0.5\" transform=\"translate(" + num(ax.map(fe.frequency_hz)) + " " +
             num(cy) + ") rotate(" + num(-(fe.pt->alpha - fe.pt->beta_skew)) + ")\"/>\n";
    }
  }
  const double by = height - 30.0;
  for (double d = std::ceil(ax.lo); d <= ax.hi + 1e-9; d += 1.0) out += text(ax.map(std::pow(10.0, d)), by, "1e" + std::to_string(static_cast<int>(d)));
  out += text(370, height - 10, "frequency (Hz)");
  return out + "</svg>\n";
}

}  // namespace sferic::svg
