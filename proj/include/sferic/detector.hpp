#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/nnet/loss.hpp"
#include "sferic/nnet/network.hpp"
#include "sferic/sampling.hpp"
#include "sferic/timeseries.hpp"
#include "sferic/trainer.hpp"

namespace sferic {

/// Maps normalized windows to sferic probabilities.
using WindowScorer = std::function<std::vector<double>(const std::vector<LabeledSample>&)>;

template <class T>
WindowScorer model_scorer(nn::Classifier<T>& model, std::size_t batch_size = 64) {
  return [&model, batch_size](const std::vector<LabeledSample>& windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < windows.size(); i += batch_size) {
      idx.clear();
      for (std::size_t j = i; j < std::min(windows.size(), i + batch_size); ++j) idx.push_back(j);
      for (T z : model.logits(to_batch<T>(windows, idx), nn::Mode::eval))
        out.push_back(static_cast<double>(nn::sigmoid(z)));
    }
    return out;
  };
}

struct DetectorConfig {
  std::size_t n = 240;
  double threshold = 0.5;
  bool strict = false;  // a segment needs two or more positive windows
  std::vector<Channel> channels{kAllChannels.begin(), kAllChannels.end()};

  void validate() const {
    if (n < 2) throw ConfigError("detector.n must be >= 2");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("detector.threshold must lie in (0, 1)");
    if (channels.empty()) throw ConfigError("detector.channels must be non-empty");
  }
};

struct DetectedSegment {
  std::size_t start = 0, end = 0;  // [start, end)
  std::size_t peak = 0;
  double probability = 0.0;  // highest window probability in the segment
  std::size_t windows = 0;
};

struct DetectionRun {
  std::size_t n = 0, stride = 0;
  double threshold = 0.5;
  std::vector<std::size_t> starts;
  std::vector<double> probabilities;
  std::vector<DetectedSegment> segments;

  std::vector<std::size_t> peaks() const {
    std::vector<std::size_t> p;
    for (const auto& s : segments) p.push_back(s.peak);
    return p;
  }
};

/// Window starts at 0, n/2, n, ...; a last window flush with the series end
/// is added when the regular grid leaves a tail uncovered.
inline std::vector<std::size_t> scan_starts(std::size_t length, std::size_t n) {
  if (length < n) throw DataError("series of " + std::to_string(length) + " samples is shorter than the window (" +
                                  std::to_string(n) + ")");
  const std::size_t stride = std::max<std::size_t>(1, n / 2);
  std::vector<std::size_t> s;
  for (std::size_t a = 0; a + n <= length; a += stride) s.push_back(a);
  if (s.back() + n < length) s.push_back(length - n);
  return s;
}

// Peak index: maximum of sum_c |x_c| / std_c over the detector channels.
inline std::size_t segment_peak(const MultiChannelSeries& series, std::span<const Channel> channels,
                                std::span<const double> channel_scale, std::size_t start, std::size_t end) {
  std::size_t best = start;
  double best_v = -1.0;
  for (std::size_t i = start; i < end; ++i) {
    double v = 0.0;
    for (std::size_t c = 0; c < channels.size(); ++c) v += std::abs(series[channels[c]][i]) * channel_scale[c];
    if (v > best_v) best_v = v, best = i;
  }
  return best;
}

/// Merges runs of consecutive positive windows into segments.
inline std::vector<DetectedSegment> merge_windows(const MultiChannelSeries& series, std::span<const Channel> channels,
                                                  std::span<const std::size_t> starts,
                                                  std::span<const double> probabilities, std::size_t n,
                                                  double threshold, bool strict) {
  std::vector<double> scale;
  for (auto c : channels) {
    const double sd = channel_std(series[c]);
    scale.push_back(sd > 0.0 ? 1.0 / sd : 0.0);
  }
  std::vector<DetectedSegment> out;
  std::size_t i = 0;
  while (i < starts.size()) {
    if (probabilities[i] < threshold) {
      ++i;
      continue;
    }
    DetectedSegment seg{starts[i], starts[i] + n, 0, probabilities[i], 1};
    std::size_t j = i + 1;
    while (j < starts.size() && probabilities[j] >= threshold && starts[j] < seg.end) {
      seg.end = starts[j] + n;
      seg.probability = std::max(seg.probability, probabilities[j]);
      ++seg.windows;
      ++j;
    }
    if (!strict || seg.windows >= 2) {
      seg.peak = segment_peak(series, channels, scale, seg.start, seg.end);
      out.push_back(seg);
    }
    i = j;
  }
  return out;
}

inline DetectionRun scan(const MultiChannelSeries& series, const WindowScorer& scorer, const DetectorConfig& cfg) {
  cfg.validate();
  DetectionRun run;
  run.n = cfg.n;
  run.stride = std::max<std::size_t>(1, cfg.n / 2);
  run.threshold = cfg.threshold;
  run.starts = scan_starts(series.length(), cfg.n);
  constexpr std::size_t kChunk = 512;
  for (std::size_t i = 0; i < run.starts.size(); i += kChunk) {
    std::vector<LabeledSample> windows;
    for (std::size_t j = i; j < std::min(run.starts.size(), i + kChunk); ++j) {
      windows.push_back(cut_window(series, cfg.channels, run.starts[j], cfg.n, 0));
      normalize_inplace(windows.back());
    }
    auto p = scorer(windows);
    if (p.size() != windows.size()) throw Error("scorer returned " + std::to_string(p.size()) + " probabilities for " +
                                                std::to_string(windows.size()) + " windows");
    run.probabilities.insert(run.probabilities.end(), p.begin(), p.end());
  }
  run.segments = merge_windows(series, cfg.channels, run.starts, run.probabilities, cfg.n, cfg.threshold, cfg.strict);
  return run;
}

/// Scorer that reports 1 for windows containing a full catalog mask interval,
/// 0 otherwise.
inline WindowScorer oracle_scorer(const SfericCatalog& catalog, std::size_t length, std::size_t r) {
  return [catalog, r, length](const std::vector<LabeledSample>& windows) {
    std::vector<double> out;
    for (const auto& w : windows) {
      double p = 0.0;
      for (auto ps : catalog.centers) {
        const std::size_t lo = ps >= r ? ps - r : 0, hi = std::min(length - 1, ps + r);
        if (lo >= w.start && hi < w.start + w.n) p = 1.0;
      }
      out.push_back(p);
    }
    return out;
  };
}

// --- matching and metrics ---

/// Greedy one-to-one matching: closest pairs first, a predicted peak within
/// +-r samples of a true center is a true positive.
struct MatchResult {
  ConfusionCounts counts;  // tn stays 0
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (predicted index, truth index)
};

inline MatchResult match_detections(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                                    std::size_t r) {
  struct Cand {
    std::size_t d, p, t;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    auto lo = std::lower_bound(truth.begin(), truth.end(), predicted[p] >= r ? predicted[p] - r : 0);
    for (auto it = lo; it != truth.end() && *it <= predicted[p] + r; ++it) {
      const auto t = static_cast<std::size_t>(it - truth.begin());
      cands.push_back({predicted[p] > *it ? predicted[p] - *it : *it - predicted[p], p, t});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.d, a.p, a.t) < std::tie(b.d, b.p, b.t);
  });
  std::vector<char> used_p(predicted.size(), 0), used_t(truth.size(), 0);
  MatchResult out;
  for (const auto& c : cands) {
    if (used_p[c.p] || used_t[c.t]) continue;
    used_p[c.p] = used_t[c.t] = 1;
    out.pairs.emplace_back(c.p, c.t);
  }
  out.counts.tp = out.pairs.size();
  out.counts.fp = predicted.size() - out.pairs.size();
  out.counts.fn = truth.size() - out.pairs.size();
  return out;
}

/// Window-level confusion against the truth catalog. Windows holding a full
/// mask interval are positive, windows touching no mask bit negative, and
/// partial windows are left out.
inline ConfusionCounts window_confusion(const DetectionRun& run, const SfericCatalog& truth, std::size_t length,
                                        std::size_t r, double threshold) {
  auto mask = build_mask(truth, length, r);
  ConfusionCounts c;
  for (std::size_t i = 0; i < run.starts.size(); ++i) {
    const std::size_t a = run.starts[i], b = a + run.n;
    bool full = false;
    for (auto ps : truth.centers) {
      const std::size_t lo = ps >= r ? ps - r : 0, hi = std::min(length - 1, ps + r);
      if (lo >= a && hi < b) full = true;
    }
    int label;
    if (full)
      label = 1;
    else if (!mask.any_in(a, run.n))
      label = 0;
    else
      continue;
    const bool pos = run.probabilities[i] >= threshold;
    if (pos && label) ++c.tp;
    else if (pos) ++c.fp;
    else if (label) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct SweepRow {
  double threshold = 0.0;
  ConfusionCounts segments;
  Metrics metrics;
};

inline std::vector<SweepRow> threshold_sweep(const MultiChannelSeries& series, const DetectionRun& run,
                                             const DetectorConfig& cfg, const SfericCatalog& truth, std::size_t r) {
  std::vector<SweepRow> rows;
  for (int k = 1; k <= 9; ++k) {
    const double th = 0.1 * k;
    auto segs = merge_windows(series, cfg.channels, run.starts, run.probabilities, run.n, th, cfg.strict);
    std::vector<std::size_t> peaks;
    for (const auto& s : segs) peaks.push_back(s.peak);
    auto m = match_detections(peaks, truth.centers, r);
    rows.push_back({th, m.counts, metrics(m.counts)});
  }
  return rows;
}

inline std::string segments_csv(const DetectionRun& run) {
  std::string out = "start,end,peak,probability\n";
  for (const auto& s : run.segments)
    out += std::to_string(s.start) + ',' + std::to_string(s.end) + ',' + std::to_string(s.peak) + ',' +
           detail::format_double(s.probability) + '\n';
  return out;
}

// --- ensemble alignment and correlation filtering ---

struct EnsembleMember {
  std::size_t peak = 0;
  int lag = 0;
  double correlation = 0.0;
  std::vector<double> waveform;  // C x (2r+1), channel-major, about peak + lag

  std::size_t center() const { return static_cast<std::size_t>(static_cast<long long>(peak) + lag); }
};

struct SfericEnsemble {
  std::size_t r = 0;
  std::vector<Channel> channels;
  std::size_t reference = 0;  // index into channels used for correlation
  bool stacked = false;       // correlate all channels, each standardized, concatenated
  std::vector<EnsembleMember> members;
  std::vector<double> mean;  // C x (2r+1)
  int iterations = 0;
  std::vector<double> mean_correlation;  // per alignment pass

  std::size_t width() const { return 2 * r + 1; }
  bool empty() const { return members.empty(); }
  std::vector<std::size_t> centers() const {
    std::vector<std::size_t> c;
    for (const auto& m : members) c.push_back(m.center());
    std::sort(c.begin(), c.end());
    return c;
  }
};

struct EnsembleConfig {
  std::size_t r = 36;
  Channel reference = Channel::Hx;
  bool stacked = false;
  int max_iterations = 10;
  std::vector<Channel> channels{kAllChannels.begin(), kAllChannels.end()};
};

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace detail {

// The vector correlated for a waveform: the reference channel, or every
// channel standardized and concatenated.
inline std::vector<double> correlation_view(const SfericEnsemble& e, std::span<const double> wave) {
  const std::size_t w = e.width();
  if (!e.stacked) return {wave.begin() + static_cast<std::ptrdiff_t>(e.reference * w),
                          wave.begin() + static_cast<std::ptrdiff_t>((e.reference + 1) * w)};
  std::vector<double> out;
  for (std::size_t c = 0; c < e.channels.size(); ++c) {
    auto ch = wave.subspan(c * w, w);
    const double sd = channel_std(ch);
    const double mean = std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(w);
    for (double v : ch) out.push_back(sd > 0.0 ? (v - mean) / sd : 0.0);
  }
  return out;
}

inline std::vector<double> cut_member(const MultiChannelSeries& s, std::span<const Channel> channels, std::size_t center,
                                      std::size_t r) {
  std::vector<double> out;
  out.reserve(channels.size() * (2 * r + 1));
  for (auto c : channels) {
    auto x = s[c].subspan(center - r, 2 * r + 1);
    out.insert(out.end(), x.begin(), x.end());
  }
  return out;
}

inline void recompute_mean(SfericEnsemble& e) {
  e.mean.assign(e.channels.size() * e.width(), 0.0);
  if (e.members.empty()) return;
  for (const auto& m : e.members)
    for (std::size_t i = 0; i < e.mean.size(); ++i) e.mean[i] += m.waveform[i];
  for (auto& v : e.mean) v /= static_cast<double>(e.members.size());
}

inline void recompute_correlations(SfericEnsemble& e) {
  const auto ref = correlation_view(e, e.mean);
  for (auto& m : e.members) m.correlation = pearson(correlation_view(e, m.waveform), ref);
}

inline double mean_member_correlation(const SfericEnsemble& e) {
  if (e.members.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : e.members) s += m.correlation;
  return s / static_cast<double>(e.members.size());
}

}  // namespace detail

/// Members are the 2r+1 windows about each peak. The first template is the
/// highest-energy member; each pass aligns every member to the template by the
/// integer lag (|lag| <= r/2) of maximum normalized cross-correlation,
/// re-centers lags on their median and rebuilds the template as the ensemble
/// mean, until lags stop changing or max_iterations passes. Peaks too close to
/// the record edges for the full lag search are left out.
inline SfericEnsemble extract_ensemble(const MultiChannelSeries& series, std::span<const std::size_t> peaks,
                                       const EnsembleConfig& cfg) {
  SfericEnsemble e;
  e.r = cfg.r;
  e.channels = cfg.channels;
  e.stacked = cfg.stacked;
  auto ref = std::find(cfg.channels.begin(), cfg.channels.end(), cfg.reference);
  if (ref == cfg.channels.end()) throw ConfigError("detector.reference_channel must be one of the ensemble channels");
  e.reference = static_cast<std::size_t>(ref - cfg.channels.begin());
  const std::size_t r = cfg.r, max_lag = cfg.r / 2;
  for (auto p : peaks) {
    if (p < r + max_lag || p + r + max_lag >= series.length()) continue;
    e.members.push_back({p, 0, 0.0, detail::cut_member(series, cfg.channels, p, r)});
  }
  if (e.members.empty()) return e;

  // Initial template: highest reference-channel energy.
  std::size_t seed = 0;
  double best_energy = -1.0;
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    const auto v = detail::correlation_view(e, e.members[i].waveform);
    double en = 0.0;
    for (double x : v) en += x * x;
    if (en > best_energy) best_energy = en, seed = i;
  }
  std::vector<double> templ = e.members[seed].waveform;

  const auto ml = static_cast<int>(max_lag);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    e.iterations = it;
    const auto tv = detail::correlation_view(e, templ);
    std::vector<int> lags;
    for (const auto& m : e.members) {
      int best_lag = 0;
      double best_c = -2.0;
      for (int lag = -ml; lag <= ml; ++lag) {
        const auto c = static_cast<std::size_t>(static_cast<long long>(m.peak) + lag);
        const double cc = pearson(detail::correlation_view(e, detail::cut_member(series, cfg.channels, c, r)), tv);
        if (cc > best_c + 1e-12) best_c = cc, best_lag = lag;
      }
      lags.push_back(best_lag);
    }
    auto sorted = lags;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const int med = sorted[sorted.size() / 2];
    bool changed = false;
    for (std::size_t i = 0; i < e.members.size(); ++i) {
      const int lag = std::clamp(lags[i] - med, -ml, ml);
      changed = changed || lag != e.members[i].lag;
      e.members[i].lag = lag;
      e.members[i].waveform = detail::cut_member(series, cfg.channels, e.members[i].center(), r);
    }
    detail::recompute_mean(e);
    detail::recompute_correlations(e);
    e.mean_correlation.push_back(detail::mean_member_correlation(e));
    templ = e.mean;
    if (!changed) break;
  }
  return e;
}

/// Iteratively drops members whose correlation with the mean of the retained
/// members is below the threshold, until no member is dropped.
inline SfericEnsemble correlation_filter(SfericEnsemble e, double threshold = 0.7) {
  while (!e.members.empty()) {
    detail::recompute_mean(e);
    detail::recompute_correlations(e);
    const auto before = e.members.size();
    std::erase_if(e.members, [&](const EnsembleMember& m) { return m.correlation < threshold; });
    if (e.members.size() == before) break;
  }
  detail::recompute_mean(e);
  if (!e.members.empty()) detail::recompute_correlations(e);
  return e;
}

}  // namespace sferic
