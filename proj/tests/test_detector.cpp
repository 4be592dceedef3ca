#include <gtest/gtest.h>

#include <memory>
#include <set>

#include "sferic/detector.hpp"
#include "sferic/scenario.hpp"

using namespace sferic;

namespace {

WindowScorer constant_scorer(std::vector<double> p) {
  return [p, i = std::make_shared<std::size_t>(0)](const std::vector<LabeledSample>& w) {
    std::vector<double> out;
    for (std::size_t k = 0; k < w.size(); ++k) out.push_back(p.at((*i)++));
    return out;
  };
}

MultiChannelSeries zeros(std::size_t len) {
  MultiChannelSeries::ChannelMap m;
  for (auto c : kAllChannels) m.emplace(c, std::vector<double>(len, 0.0));
  return MultiChannelSeries(48000.0, std::move(m));
}

}  // namespace

TEST(Scan, StartsUseHalfStrideAndCoverTheTail) {
  EXPECT_EQ(scan_starts(720, 240), (std::vector<std::size_t>{0, 120, 240, 360, 480}));
  EXPECT_EQ(scan_starts(730, 240), (std::vector<std::size_t>{0, 120, 240, 360, 480, 490}));
  EXPECT_EQ(scan_starts(240, 240), (std::vector<std::size_t>{0}));
  EXPECT_THROW(scan_starts(239, 240), DataError);
}

TEST(Scan, OracleScorerRecoversEveryInjectedSferic) {
  Scenario sc;
  sc.duration_s = 1.0;
  sc.noise.white_std = 0.1;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto r = synthesize_station(sc, seed, 0);
    DetectorConfig dc;
    auto run = scan(r.series, oracle_scorer(r.catalog, r.series.length(), 36), dc);
    auto m = match_detections(run.peaks(), r.catalog.centers, 36);
    EXPECT_EQ(m.counts.fn, 0u) << "seed " << seed;
    EXPECT_EQ(m.counts.fp, 0u) << "seed " << seed;
  }
}

TEST(Scan, SfericOnAWindowEdgeIsCenteredByTheShiftedWindow) {
  // Center at 240, the boundary between windows 0 and 240; window 120 holds it whole.
  SfericCatalog cat{"", {240}};
  auto run = scan(zeros(960), oracle_scorer(cat, 960, 36), DetectorConfig{});
  ASSERT_EQ(run.segments.size(), 1u);
  EXPECT_EQ(run.segments[0].start, 120u);
  EXPECT_EQ(run.segments[0].end, 360u);
}

TEST(Merge, ConsecutiveOverlappingPositivesFormOneSegment) {
  auto s = zeros(1200);
  // starts 0,120,...,960: windows 1,2 positive, 3 negative, 5 positive
  std::vector<double> p{0.1, 0.9, 0.6, 0.2, 0.3, 0.7, 0.1, 0.0, 0.0};
  DetectorConfig dc;
  auto run = scan(s, constant_scorer(p), dc);
  ASSERT_EQ(run.segments.size(), 2u);
  EXPECT_EQ(run.segments[0].start, 120u);
  EXPECT_EQ(run.segments[0].end, 480u);
  EXPECT_EQ(run.segments[0].windows, 2u);
  EXPECT_DOUBLE_EQ(run.segments[0].probability, 0.9);
  EXPECT_EQ(run.segments[1].start, 600u);
  dc.strict = true;
  auto strict = scan(s, constant_scorer(p), dc);
  ASSERT_EQ(strict.segments.size(), 1u);
  EXPECT_EQ(strict.segments[0].start, 120u);
}

TEST(Merge, PeakIsLargestNormalizedAmplitudeSum) {
  MultiChannelSeries::ChannelMap m;
  std::vector<double> a(480, 0.0), b(480, 0.0);
  a[100] = 10.0;
  b[300] = 1.0;
  b[301] = -1.0;
  m.emplace(Channel::Hx, a);
  m.emplace(Channel::Hy, b);
  MultiChannelSeries s(48000.0, m);
  std::vector<Channel> ch{Channel::Hx, Channel::Hy};
  std::vector<double> scale{1.0 / channel_std(a), 1.0 / channel_std(b)};
  std::size_t best = 0;
  double bv = -1;
  for (std::size_t i = 0; i < 480; ++i) {
    const double v = std::abs(a[i]) * scale[0] + std::abs(b[i]) * scale[1];
    if (v > bv) bv = v, best = i;
  }
  EXPECT_EQ(segment_peak(s, ch, scale, 0, 480), best);
}

TEST(Match, GreedyClosestFirstOneToOne) {
  std::vector<std::size_t> truth{100, 130, 500};
  std::vector<std::size_t> pred{110, 120, 600};
  auto m = match_detections(pred, truth, 36);
  EXPECT_EQ(m.counts.tp, 2u);
  EXPECT_EQ(m.counts.fp, 1u);
  EXPECT_EQ(m.counts.fn, 1u);
  // 120-130 (d=10) and 110-100 (d=10) both tie at 10; both are taken.
  EXPECT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(match_detections({}, truth, 36).counts.fn, 3u);
  EXPECT_EQ(match_detections(pred, {}, 36).counts.fp, 3u);
  EXPECT_EQ(match_detections(std::vector<std::size_t>{136}, std::vector<std::size_t>{100}, 36).counts.tp, 1u);
  EXPECT_EQ(match_detections(std::vector<std::size_t>{137}, std::vector<std::size_t>{100}, 36).counts.tp, 0u);
}

TEST(Match, InvariantsOnRandomInput) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> t, p;
    for (std::size_t i = 0; i < 2000; i += 1 + uniform_index(rng, 200)) t.push_back(i);
    for (std::size_t i = 0; i < 2000; i += 1 + uniform_index(rng, 200)) p.push_back(i);
    auto m = match_detections(p, t, 36);
    EXPECT_EQ(m.counts.tp + m.counts.fp, p.size());
    EXPECT_EQ(m.counts.tp + m.counts.fn, t.size());
    std::set<std::size_t> up, ut;
    for (auto [a, b] : m.pairs) {
      EXPECT_LE(p[a] > t[b] ? p[a] - t[b] : t[b] - p[a], 36u);
      EXPECT_TRUE(up.insert(a).second);
      EXPECT_TRUE(ut.insert(b).second);
    }
    // Maximality: no unmatched pair lies within r.
    for (std::size_t a = 0; a < p.size(); ++a)
      for (std::size_t b = 0; b < t.size(); ++b)
        if (!up.count(a) && !ut.count(b)) EXPECT_GT(p[a] > t[b] ? p[a] - t[b] : t[b] - p[a], 36u);
  }
}

TEST(WindowConfusion, PartialWindowsAreLeftOut) {
  SfericCatalog cat{"", {300}};
  DetectionRun run;
  run.n = 240;
  run.starts = {0, 120, 240, 360};
  run.probabilities = {0.9, 0.8, 0.1, 0.6};
  // Mask covers 264..336: windows 120 and 240 hold it, 0 and 360 are clear.
  auto c = window_confusion(run, cat, 600, 36, 0.5);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.fp, 2u);
  EXPECT_EQ(c.tn, 0u);
  run.starts = {0, 100, 360};
  run.probabilities = {0.9, 0.9, 0.1};
  auto d = window_confusion(run, SfericCatalog{"", {330}}, 600, 36, 0.5);
  // Mask 294..366: window 0 clear, 100 partial, 360 partial.
  EXPECT_EQ(d.fp + d.tp + d.fn + d.tn, 1u);
  EXPECT_EQ(d.fp, 1u);
}

TEST(Sweep, RowsCoverThresholds) {
  Scenario sc;
  sc.duration_s = 0.5;
  sc.noise.white_std = 0.1;
  auto r = synthesize_station(sc, 2, 0);
  DetectorConfig dc;
  auto scorer = [&](const std::vector<LabeledSample>& w) {
    auto base = oracle_scorer(r.catalog, r.series.length(), 36)(w);
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = base[i] > 0 ? 0.95 : 0.05 + 0.1 * (i % 9);
    return base;
  };
  auto run = scan(r.series, scorer, dc);
  auto rows = threshold_sweep(r.series, run, dc, r.catalog, 36);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_NEAR(rows.front().threshold, 0.1, 1e-12);
  EXPECT_NEAR(rows.back().threshold, 0.9, 1e-12);
  EXPECT_EQ(rows.back().segments.fp, 0u);
  EXPECT_EQ(rows.back().segments.fn, 0u);
  EXPECT_GT(rows.front().segments.tp + rows.front().segments.fp, 0u);
}

TEST(Pearson, KnownValues) {
  std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, d{1, 1, 1, 1};
  EXPECT_NEAR(pearson(a, b), 1.0, 1e-15);
  EXPECT_NEAR(pearson(a, c), -1.0, 1e-15);
  EXPECT_EQ(pearson(a, d), 0.0);
}

namespace {

// Identical waveforms at known centers, plus mild noise.
struct ShiftCase {
  MultiChannelSeries series;
  std::vector<std::size_t> truth;
};

ShiftCase injected(std::uint64_t seed, std::size_t count, double noise) {
  SfericModel model;
  model.carrier_hz = 4000;
  model.decay_s = 3e-4;
  const double inv = 1.0 / model.shape_peak();
  auto value = [&](long i) { return i < 0 ? 0.0 : model.shape(static_cast<double>(i) / 48000.0) * inv; };
  Rng rng(seed);
  const std::size_t len = 48000;
  std::vector<double> hx(len), hy(len), ex(len), ey(len);
  ShiftCase c;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t center = 2000 + k * 1500 + uniform_index(rng, 200);
    c.truth.push_back(center);
    for (long i = -200; i <= 400; ++i) {
      const double v = value(i);
      const auto j = static_cast<std::size_t>(static_cast<long>(center) + i);
      hx[j] += v;
      hy[j] += 0.5 * v;
      ex[j] += 3 * v;
      ey[j] -= 2 * v;
    }
  }
  for (auto* ch : {&hx, &hy, &ex, &ey})
    for (auto& x : *ch) x += noise * standard_normal(rng);
  c.series = MultiChannelSeries(48000.0, {{Channel::Ex, ex}, {Channel::Ey, ey}, {Channel::Hx, hx}, {Channel::Hy, hy}});
  return c;
}

}  // namespace

TEST(Ensemble, AlignmentRecoversKnownShifts) {
  auto c = injected(4, 20, 0.01);
  Rng rng(5);
  std::vector<std::size_t> peaks;
  for (auto t : c.truth) peaks.push_back(t + uniform_index(rng, 17) - 8);
  EnsembleConfig cfg;
  auto e = extract_ensemble(c.series, peaks, cfg);
  ASSERT_EQ(e.members.size(), 20u);
  // All aligned centers sit at one common offset from the truth.
  const long offset = static_cast<long>(e.members[0].center()) - static_cast<long>(c.truth[0]);
  for (std::size_t i = 0; i < e.members.size(); ++i)
    EXPECT_EQ(static_cast<long>(e.members[i].center()) - static_cast<long>(c.truth[i]), offset) << i;
  EXPECT_LE(std::abs(offset), 18);
  for (const auto& m : e.members) EXPECT_GT(m.correlation, 0.99);
  EXPECT_LE(e.iterations, cfg.max_iterations);
}

TEST(Ensemble, EdgePeaksAreSkippedAndEmptyPropagates) {
  auto c = injected(1, 2, 0.0);
  std::vector<std::size_t> peaks{5, 47990};
  EXPECT_TRUE(extract_ensemble(c.series, peaks, EnsembleConfig{}).empty());
  EXPECT_TRUE(correlation_filter(SfericEnsemble{}, 0.7).empty());
  EnsembleConfig bad;
  bad.channels = {Channel::Ex};
  EXPECT_THROW(extract_ensemble(c.series, c.truth, bad), ConfigError);
}

TEST(CorrelationFilter, RetainedSetPassesBruteForceRecheck) {
  auto c = injected(7, 25, 0.05);
  std::vector<std::size_t> peaks = c.truth;
  for (int k = 0; k < 10; ++k) peaks.push_back(1000 + 1500 * static_cast<std::size_t>(k) + 700);  // noise-only peaks
  std::sort(peaks.begin(), peaks.end());
  auto e = extract_ensemble(c.series, peaks, EnsembleConfig{});
  auto f = correlation_filter(e, 0.7);
  ASSERT_FALSE(f.empty());
  // Recompute the mean of the retained members and every correlation from scratch.
  const std::size_t w = f.width();
  std::vector<double> mean(f.channels.size() * w, 0.0);
  for (const auto& m : f.members)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += m.waveform[i] / static_cast<double>(f.members.size());
  std::span<const double> ref(mean.data() + f.reference * w, w);
  for (const auto& m : f.members) {
    const double r = pearson(std::span<const double>(m.waveform.data() + f.reference * w, w), ref);
    EXPECT_GE(r, 0.7);
    EXPECT_NEAR(r, m.correlation, 1e-12);
  }
  std::set<std::size_t> kept;
  for (const auto& m : f.members) kept.insert(m.peak);
  EXPECT_EQ(kept, std::set<std::size_t>(c.truth.begin(), c.truth.end()));
}
