#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/io.hpp"
#include "sferic/rng.hpp"
#include "sferic/timeseries.hpp"

namespace sferic {

struct SamplingConfig {
  std::size_t n = 240;
  std::size_t r = 36;
  double snr_low = 0.0;
  double snr_high = 1.0;
  std::vector<Channel> channels{kAllChannels.begin(), kAllChannels.end()};

  void validate() const {
    if (!(n > 2 * r)) throw ConfigError("sampling.n must exceed 2 * sampling.r");
    if (!(0.0 <= snr_low && snr_low <= snr_high && snr_high <= 1.0))
      throw ConfigError("sampling.snr_low/snr_high must satisfy 0 <= low <= high <= 1");
    if (channels.empty()) throw ConfigError("sampling.channels must be non-empty");
  }
};

/// C x n window, channel-major, with the label and where it came from.
struct LabeledSample {
  std::vector<double> data;
  std::size_t channels = 0;
  std::size_t n = 0;
  int label = 0;
  std::size_t series = 0;  // index into the caller's series list
  std::size_t start = 0;

  std::span<double> channel(std::size_t c) { return {data.data() + c * n, n}; }
  std::span<const double> channel(std::size_t c) const { return {data.data() + c * n, n}; }
};

inline LabeledSample cut_window(const MultiChannelSeries& s, std::span<const Channel> channels, std::size_t start,
                                std::size_t n, int label) {
  if (start + n > s.length()) throw DataError("window [" + std::to_string(start) + ", +" + std::to_string(n) +
                                              ") exceeds series length " + std::to_string(s.length()));
  LabeledSample out{std::vector<double>(channels.size() * n), channels.size(), n, label, 0, start};
  for (std::size_t c = 0; c < channels.size(); ++c) {
    auto src = s[channels[c]].subspan(start, n);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  return out;
}

/// Start offsets [first, last] of length-n windows that contain the whole
/// (edge-clamped) mask interval of a sferic at ps; empty when none fit.
struct StartRange {
  std::size_t first = 1, last = 0;
  bool empty() const noexcept { return first > last; }
  std::size_t count() const noexcept { return empty() ? 0 : last - first + 1; }
};

inline StartRange admissible_starts(std::size_t ps, std::size_t length, std::size_t n, std::size_t r) {
  if (ps >= length || n > length) return {};
  const std::size_t lo = ps >= r ? ps - r : 0;
  const std::size_t hi = std::min(length - 1, ps + r);
  const std::size_t first = hi + 1 >= n ? hi + 1 - n : 0;
  const std::size_t last = std::min(lo, length - n);
  if (first > last) return {};
  return {first, last};
}

struct PositiveDraw {
  std::vector<LabeledSample> samples;
  std::size_t skipped = 0;  // catalog entries with no admissible window
};

// Picks a sferic uniformly, then a start uniformly over its admissible range.
inline PositiveDraw positive_windows(const MultiChannelSeries& series, const SfericCatalog& catalog,
                                     const SamplingConfig& cfg, std::uint64_t seed, std::size_t k) {
  cfg.validate();
  if (k == 0) throw ConfigError("positive_windows: k must be >= 1");
  if (catalog.centers.empty()) throw DataError("positive_windows: catalog is empty");
  PositiveDraw out;
  std::vector<StartRange> ranges;
  for (auto ps : catalog.centers) {
    auto rg = admissible_starts(ps, series.length(), cfg.n, cfg.r);
    if (rg.empty())
      ++out.skipped;
    else
      ranges.push_back(rg);
  }
  if (ranges.empty()) return out;
  Rng rng(derive_seed(seed, 0x706f73ULL));
  out.samples.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& rg = ranges[uniform_index(rng, ranges.size())];
    const std::size_t start = rg.first + uniform_index(rng, rg.count());
    out.samples.push_back(cut_window(series, cfg.channels, start, cfg.n, 1));
  }
  return out;
}

/// Starts of length-n windows that overlap no mask bit, ascending.
inline std::vector<std::size_t> mask_free_starts(const SampleMask& mask, std::size_t n) {
  std::vector<std::size_t> out;
  if (mask.size() < n) return out;
  std::size_t run = 0;  // consecutive zero bits ending at i
  for (std::size_t i = 0; i < mask.size(); ++i) {
    run = mask.bits[i] ? 0 : run + 1;
    if (run >= n) out.push_back(i + 1 - n);
  }
  return out;
}

inline std::vector<LabeledSample> negative_windows(const MultiChannelSeries& series, const SampleMask& mask,
                                                   const SamplingConfig& cfg, std::uint64_t seed, std::size_t k) {
  cfg.validate();
  if (series.length() <= cfg.n) throw DataError("negative_windows: series not longer than the window length");
  if (mask.size() != series.length()) throw DataError("negative_windows: mask length differs from series length");
  const auto starts = mask_free_starts(mask, cfg.n);
  if (starts.empty()) throw DataError("negative_windows: insufficient mask-free span for a window of " +
                                      std::to_string(cfg.n) + " samples");
  Rng rng(derive_seed(seed, 0x6e6567ULL));
  std::vector<LabeledSample> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(cut_window(series, cfg.channels, starts[uniform_index(rng, starts.size())], cfg.n, 0));
  return out;
}

/// Per-channel standardization to zero mean and unit population std. A
/// constant channel maps to all zeros.
inline void normalize_inplace(LabeledSample& s) {
  for (std::size_t c = 0; c < s.channels; ++c) {
    auto x = s.channel(c);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(x.size()));
    if (!(sd > 1e-12 * std::abs(mean)) || !std::isfinite(sd)) {
      std::fill(x.begin(), x.end(), 0.0);
      continue;
    }
    for (auto& v : x) v = (v - mean) / sd;
  }
}

inline LabeledSample normalize(LabeledSample s) {
  normalize_inplace(s);
  return s;
}

inline double channel_std(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

// Adds white noise with std alpha * std(channel) to each channel.
inline void add_relative_noise(LabeledSample& s, double alpha, Rng& rng) {
  if (alpha == 0.0) return;
  for (std::size_t c = 0; c < s.channels; ++c) {
    auto x = s.channel(c);
    const double sd = alpha * channel_std(x);
    for (auto& v : x) v += sd * standard_normal(rng);
  }
}

/// Noise augmentation: s ~ U(snr_low, snr_high), noise std = (1 - s) * std(window).
inline LabeledSample augment(LabeledSample s, std::uint64_t seed, const SamplingConfig& cfg) {
  Rng rng(derive_seed(seed, 0x61756700ULL));
  const double snr = uniform(rng, cfg.snr_low, cfg.snr_high);
  add_relative_noise(s, 1.0 - snr, rng);
  return s;
}

/// Disjoint train/val/test partition of series ids by the given ratios.
struct SeriesSplit {
  std::vector<std::size_t> train, val, test;
};

inline SeriesSplit split_series(std::size_t count, double train_ratio, double val_ratio, double test_ratio,
                                std::uint64_t seed) {
  if (!(train_ratio > 0.0 && val_ratio >= 0.0 && test_ratio >= 0.0))
    throw ConfigError("dataset split ratios must be non-negative with a positive train share");
  std::vector<std::size_t> ids(count);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x73706c74ULL));
  for (std::size_t i = count; i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
  const double total = train_ratio + val_ratio + test_ratio;
  auto n_val = static_cast<std::size_t>(std::llround(val_ratio / total * static_cast<double>(count)));
  auto n_test = static_cast<std::size_t>(std::llround(test_ratio / total * static_cast<double>(count)));
  if (val_ratio > 0.0 && n_val == 0 && count >= 3) n_val = 1;
  if (test_ratio > 0.0 && n_test == 0 && count >= 3) n_test = 1;
  if (n_val + n_test >= count) throw ConfigError("dataset split leaves no training series");
  SeriesSplit out;
  out.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  out.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

/// Dataset manifest: one "series_path start label" line per sample.
struct ManifestEntry {
  std::string series_path;
  std::size_t start = 0;
  int label = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline std::string encode_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out = "# series_path start label\n";
  for (const auto& e : entries) out += e.series_path + ' ' + std::to_string(e.start) + ' ' + std::to_string(e.label) + '\n';
  return out;
}

inline std::vector<ManifestEntry> decode_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.series_path)) continue;
    std::string extra;
    if (!(ls >> e.start >> e.label) || (e.label != 0 && e.label != 1) || (ls >> extra))
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 'series_path start label(0|1)'");
    out.push_back(std::move(e));
  }
  return out;
}

/// A series with its truth catalog and mask, as used for sample generation.
struct LabeledSeries {
  std::string path;
  MultiChannelSeries series;
  SfericCatalog catalog;
  SampleMask mask;
};

inline LabeledSeries make_labeled(std::string path, MultiChannelSeries s, SfericCatalog c, std::size_t r) {
  c.validate(s.length());
  auto m = build_mask(c, s.length(), r);
  return {std::move(path), std::move(s), std::move(c), std::move(m)};
}

/// Balanced sample source over a set of series. Each call with an epoch index
/// draws a fresh, seed-determined set with positives:negatives = 1:ratio.
class PoolSource {
 public:
  PoolSource(std::vector<const LabeledSeries*> pool, SamplingConfig cfg, double negative_ratio, bool augment,
             std::uint64_t seed)
      : pool_(std::move(pool)), cfg_(std::move(cfg)), ratio_(negative_ratio), augment_(augment), seed_(seed) {
    cfg_.validate();
    if (!(ratio_ >= 0.0)) throw ConfigError("sampling.negative_ratio must be >= 0");
    if (pool_.empty()) throw DataError("sample pool has no series");
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      const auto& ls = *pool_[i];
      for (auto ps : ls.catalog.centers) {
        auto rg = admissible_starts(ps, ls.series.length(), cfg_.n, cfg_.r);
        if (rg.empty())
          ++skipped_;
        else
          positives_.push_back({i, rg});
      }
      auto starts = mask_free_starts(ls.mask, cfg_.n);
      negative_offsets_.push_back(negative_total_);
      negative_total_ += starts.size();
      negatives_.push_back(std::move(starts));
    }
    if (positives_.empty()) throw DataError("sample pool has no admissible positive window");
    if (negative_total_ == 0 && ratio_ > 0.0) throw DataError("sample pool has no mask-free negative window");
  }

  // Number of distinct positive windows available.
  std::size_t positives_available() const noexcept {
    std::size_t n = 0;
    for (const auto& p : positives_) n += p.range.count();
    return n;
  }
  std::size_t skipped() const noexcept { return skipped_; }

  std::size_t positive_count(std::size_t total) const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(total) / (1.0 + ratio_)));
  }
  // Realized non-sferic fraction for a draw of `total` samples.
  double beta(std::size_t total) const {
    return static_cast<double>(total - positive_count(total)) / static_cast<double>(total);
  }

  std::vector<LabeledSample> draw(std::size_t epoch, std::size_t total) const {
    const std::size_t npos = positive_count(total);
    std::vector<LabeledSample> out;
    out.reserve(total);
    Rng rng(derive_seed(seed_, epoch, 0x706f6f6cULL));
    for (std::size_t i = 0; i < total; ++i) {
      LabeledSample s;
      if (i < npos) {
        const auto& p = positives_[uniform_index(rng, positives_.size())];
        s = cut_window(pool_[p.series]->series, cfg_.channels, p.range.first + uniform_index(rng, p.range.count()),
                       cfg_.n, 1);
        s.series = p.series;
      } else {
        const std::size_t g = uniform_index(rng, negative_total_);
        const auto it = std::upper_bound(negative_offsets_.begin(), negative_offsets_.end(), g);
        const auto si = static_cast<std::size_t>(it - negative_offsets_.begin()) - 1;
        s = cut_window(pool_[si]->series, cfg_.channels, negatives_[si][g - negative_offsets_[si]], cfg_.n, 0);
        s.series = si;
      }
      if (augment_) {
        const double snr = uniform(rng, cfg_.snr_low, cfg_.snr_high);
        add_relative_noise(s, 1.0 - snr, rng);
      }
      normalize_inplace(s);
      out.push_back(std::move(s));
    }
    return out;
  }

  std::vector<ManifestEntry> manifest(const std::vector<LabeledSample>& samples) const {
    std::vector<ManifestEntry> out;
    for (const auto& s : samples) out.push_back({pool_.at(s.series)->path, s.start, s.label});
    return out;
  }

 private:
  struct Positive {
    std::size_t series;
    StartRange range;
  };
  std::vector<const LabeledSeries*> pool_;
  SamplingConfig cfg_;
  double ratio_;
  bool augment_;
  std::uint64_t seed_;
  std::vector<Positive> positives_;
  std::vector<std::vector<std::size_t>> negatives_;
  std::vector<std::size_t> negative_offsets_;
  std::size_t negative_total_ = 0;
  std::size_t skipped_ = 0;
};

}  // namespace sferic
