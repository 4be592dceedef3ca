#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "sferic/rng.hpp"
#include "sferic/spectra.hpp"

using namespace sferic;

namespace {

Eigen::MatrixXd sinc_matrix(std::size_t n, double w) {
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          i == j ? 2 * w : std::sin(2 * std::numbers::pi * w * d) / (std::numbers::pi * d);
    }
  return a;
}

MultiChannelSeries noise_series(std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  MultiChannelSeries::ChannelMap m;
  for (auto c : kAllChannels) {
    std::vector<double> v(len);
    for (auto& x : v) x = standard_normal(rng);
    m.emplace(c, std::move(v));
  }
  return MultiChannelSeries(48000.0, std::move(m));
}

}  // namespace

TEST(Frequencies, TwelvePerDecadeAcrossTheBand) {
  const auto f = log_frequencies();
  ASSERT_EQ(f.size(), 15u);
  EXPECT_DOUBLE_EQ(f.front(), 700.0);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_NEAR(f[i] / f[i - 1], std::pow(10.0, 1.0 / 12), 1e-12);
  EXPECT_LE(f.back(), 10400.0);
  EXPECT_GT(f.back() * std::pow(10.0, 1.0 / 12), 10400.0);
  EXPECT_THROW(log_frequencies(0.0), ConfigError);
}

TEST(Plan, WorkedCount) {
  const auto p = plan_windows(10.0, 1000.0, 10.0, 1.0, 48000.0);
  EXPECT_EQ(p.count, 1000u);
  EXPECT_EQ(p.window_length, 480u);
  EXPECT_EQ(p.starts.front(), 0u);
  EXPECT_EQ(p.starts.back(), 480000u - 480u);
}

TEST(Plan, RandomizedConsistency) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const double t = uniform(rng, 0.5, 20), f = uniform(rng, 700, 10400), np = std::floor(uniform(rng, 1, 40));
    const double gamma = uniform(rng, 0.25, 2.0), fs = 48000;
    const auto p = plan_windows(t, f, np, gamma, fs);
    EXPECT_EQ(p.window_length, static_cast<std::size_t>(std::llround(np / f * fs)));
    EXPECT_EQ(p.count, static_cast<std::size_t>(std::floor(t * f / (gamma * np) + 1e-9)));
    ASSERT_EQ(p.starts.size(), p.count);
    const auto len = static_cast<std::size_t>(std::llround(t * fs));
    for (std::size_t i = 0; i < p.count; ++i) {
      EXPECT_LE(p.starts[i] + p.window_length, len);
      if (i) EXPECT_GE(p.starts[i], p.starts[i - 1]);
    }
  }
  EXPECT_THROW(plan_windows(1, 1000, 0.5, 1, 48000), ConfigError);
  EXPECT_THROW(plan_windows(1, 1000, 10, 0, 48000), ConfigError);
  EXPECT_THROW(plan_windows(0.001, 700, 10, 1, 48000), DataError);
}

TEST(Slepian, OrthonormalAndMatchesDenseEigensolver) {
  for (std::size_t n : {64u, 240u})
    for (int tau = 1; tau <= 4; ++tau) {
      const auto bank = slepian_tapers(n, tau);
      const std::size_t k = static_cast<std::size_t>(std::max(1, 2 * tau - 1));
      ASSERT_EQ(bank.tapers.size(), k);
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
          double dot = 0;
          for (std::size_t i = 0; i < n; ++i) dot += bank.tapers[a][i] * bank.tapers[b][i];
          EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-8);
        }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sinc_matrix(n, static_cast<double>(tau) / n));
      for (std::size_t a = 0; a < k; ++a) {
        const auto idx = static_cast<Eigen::Index>(n - 1 - a);
        EXPECT_NEAR(bank.concentrations[a], es.eigenvalues()(idx), 1e-8) << n << " " << tau << " " << a;
        double dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += bank.tapers[a][i] * es.eigenvectors()(static_cast<Eigen::Index>(i), idx);
        EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
      }
    }
}

TEST(Slepian, SignConventionAndValidation) {
  const auto bank = slepian_tapers(100, 3);
  double s0 = 0, s1 = 0;
  for (std::size_t i = 0; i < 100; ++i) s0 += bank.tapers[0][i], s1 += (49.5 - i) * bank.tapers[1][i];
  EXPECT_GT(s0, 0);
  EXPECT_GT(s1, 0);
  EXPECT_THROW(slepian_tapers(100, 5), ConfigError);
  EXPECT_THROW(slepian_tapers(7, 1), ConfigError);
}

TEST(Coefficients, MatchNaiveDft) {
  const auto s = noise_series(3000, 2);
  TaperCache cache;
  const std::vector<Segment> segs{{0, 480}, {1000, 480}, {2990, 5}};
  const auto ens = coefficients(s, 2000.0, segs, 2, cache);
  const auto bank = slepian_tapers(480, 2);
  ASSERT_EQ(ens.rows.size(), 3u + 3u + 1u);
  std::size_t row = 0;
  for (const auto& seg : segs) {
    const std::size_t k = seg.length >= 8 ? 3 : 1;
    for (std::size_t t = 0; t < k; ++t, ++row)
      for (std::size_t c = 0; c < 4; ++c) {
        std::complex<double> x = 0;
        for (std::size_t i = 0; i < seg.length; ++i) {
          const double w = seg.length >= 8 ? bank.tapers[t][i] : 1.0;
          x += w * s[kAllChannels[c]][seg.start + i] * std::polar(1.0, -2 * std::numbers::pi * 2000.0 * i / 48000.0);
        }
        EXPECT_LT(std::abs(ens.rows[row][c] - x), 1e-10 * (1 + std::abs(x)));
      }
  }
  EXPECT_THROW(coefficients(s, 2000.0, std::vector<Segment>{{2900, 480}}, 2, cache), DataError);
}

TEST(Segments, CenteredAndClipped) {
  const std::vector<std::size_t> c{100, 1000, 1990};
  const auto segs = centered_segments(c, 480, 2000);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[0], (Segment{0, 340}));
  EXPECT_EQ(segs[1], (Segment{760, 480}));
  EXPECT_EQ(segs[2], (Segment{1750, 250}));
  const auto plan = plan_windows(1.0, 1000, 10, 1, 48000);
  EXPECT_EQ(even_segments(plan).size(), plan.count);
}

TEST(TaperCache, SharesBanks) {
  TaperCache cache;
  auto a = cache.get(240, 2), b = cache.get(240, 2), c = cache.get(240, 0);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_EQ(c->tapers.size(), 1u);
  EXPECT_EQ(c->tapers[0], std::vector<double>(240, 1.0));
}
