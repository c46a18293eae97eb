#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vmic/metrics.hpp"

using namespace vmic;
using namespace vmic::metrics;

namespace {

std::vector<double> white(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

// Second-order resonator driven by noise: a speech-like spectral peak.
std::vector<double> resonant(std::size_t n, double f, double fs, std::uint64_t seed) {
  const double r = 0.97, w = 2.0 * std::numbers::pi * f / fs;
  const auto e = white(n, 1.0, seed);
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 2; i < n; ++i) x[i] = 2.0 * r * std::cos(w) * x[i - 1] - r * r * x[i - 2] + e[i];
  return x;
}

}  // namespace

TEST(Xcorr, MatchesDirectSum) {
  const auto a = white(37, 1.0, 1), b = white(50, 1.0, 2);
  const auto c = cross_correlation(a, b);
  ASSERT_EQ(c.size(), a.size() + b.size() - 1);
  for (long k = -36; k <= 49; ++k) {
    double s = 0.0;
    for (long i = 0; i < 37; ++i)
      if (i + k >= 0 && i + k < 50) s += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i + k)];
    EXPECT_NEAR(c[static_cast<std::size_t>(k + 36)], s, 1e-9);
  }
}

TEST(Align, FindsDelayBothWays) {
  const auto x = white(4000, 1.0, 3);
  for (long d : {0L, 25L, -40L}) {
    std::vector<double> y(4000, 0.0);
    for (long i = 0; i < 4000; ++i)
      if (i - d >= 0 && i - d < 4000) y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i - d)];
    const auto a = align(x, y, 100);
    EXPECT_EQ(a.lag, d);
    EXPECT_EQ(a.reference.size(), a.test.size());
    for (std::size_t i = 100; i < 200; ++i) EXPECT_EQ(a.reference[i], a.test[i]);
  }
  EXPECT_THROW(align(std::vector<double>{}, x, 3), Error);
}

TEST(SegSnr, MatchesFrameByFrameOracle) {
  const double fs = 8000.0;
  const auto ref = resonant(8000, 500.0, fs, 4);
  auto test = ref;
  const auto n = white(8000, 0.5, 5);
  for (std::size_t i = 0; i < test.size(); ++i) test[i] += n[i] * (i < 4000 ? 0.1 : 3.0);
  // oracle: 240-sample frames, hop 120, per-frame clamp to [-10, 35]
  double total = 0.0;
  int used = 0;
  for (std::size_t s = 0; s + 240 <= ref.size(); s += 120) {
    double e = 0.0, d = 0.0;
    for (std::size_t i = s; i < s + 240; ++i) {
      e += ref[i] * ref[i];
      d += (ref[i] - test[i]) * (ref[i] - test[i]);
    }
    total += std::clamp(10.0 * std::log10(e / d), -10.0, 35.0);
    ++used;
  }
  const auto got = segmental_snr(ref, test, fs);
  EXPECT_EQ(got.frames_used, static_cast<std::size_t>(used));
  EXPECT_NEAR(got.db, total / used, 1e-9);
  EXPECT_EQ(segmental_snr(ref, ref, fs).db, kSegSnrCeiling);
}

TEST(SegSnr, GainPolicy) {
  const double fs = 8000.0;
  const auto ref = resonant(4000, 700.0, fs, 6);
  auto louder = ref;
  for (double& v : louder) v *= 4.0;
  EXPECT_LT(segmental_snr(ref, louder, fs).db, 0.0);
  EXPECT_EQ(segmental_snr(ref, louder, fs, {30.0, GainPolicy::match_rms}).db, kSegSnrCeiling);
  EXPECT_THROW(segmental_snr(ref, std::vector<double>(10, 0.0), fs), Error);
  EXPECT_THROW(segmental_snr(std::vector<double>(4000, 0.0), ref, fs), Error);
}

TEST(Lpc, LevinsonMatchesNormalEquations) {
  const auto x = resonant(2000, 900.0, 8000.0, 7);
  const auto r = autocorrelation(x, 10);
  const auto a = levinson(r);
  ASSERT_EQ(a.size(), 11u);
  // oracle: solve R a' = -r[1..p]
  Eigen::MatrixXd big(10, 10);
  Eigen::VectorXd rhs(10);
  for (int i = 0; i < 10; ++i) {
    rhs(i) = -r[static_cast<std::size_t>(i + 1)];
    for (int j = 0; j < 10; ++j) big(i, j) = r[static_cast<std::size_t>(std::abs(i - j))];
  }
  const Eigen::VectorXd sol = big.ldlt().solve(rhs);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(a[static_cast<std::size_t>(i + 1)], sol(i), 1e-8);
  EXPECT_TRUE(levinson(std::vector<double>{0.0, 0.0}).empty());
}

TEST(Llr, ZeroForIdenticalAndGrowsWithDistortion) {
  const double fs = 8000.0;
  const auto ref = resonant(16000, 600.0, fs, 8);
  EXPECT_NEAR(mean_llr(ref, ref, fs).mean, 0.0, 1e-12);
  auto scaled = ref;
  for (double& v : scaled) v *= 0.3;
  EXPECT_NEAR(mean_llr(ref, scaled, fs).mean, 0.0, 1e-9);  // gain does not change the LPC fit
  double prev = 0.0;
  for (double sigma : {0.5, 2.0, 8.0}) {
    auto t = ref;
    const auto n = white(t.size(), sigma, 9);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += n[i];
    const double llr = mean_llr(ref, t, fs).mean;
    EXPECT_GT(llr, prev);
    prev = llr;
  }
  EXPECT_THROW(mean_llr(ref, ref, 1000.0), Error);
}

TEST(Evaluate, AlignsBeforeScoring) {
  const double fs = 8000.0;
  const auto ref = resonant(8000, 400.0, fs, 10);
  std::vector<double> late(8000, 0.0);
  for (std::size_t i = 30; i < late.size(); ++i) late[i] = ref[i - 30];
  const auto r = evaluate({fs, ref}, {fs, late}, 100);
  EXPECT_EQ(r.alignment_lag, 30);
  EXPECT_EQ(r.seg_snr, kSegSnrCeiling);
  EXPECT_NEAR(r.mean_llr, 0.0, 1e-12);
  EXPECT_TRUE(to_json(r)["pesq"].is_null());
  EXPECT_THROW(evaluate({fs, ref}, {16000.0, late}, 10), Error);
}

TEST(Spearman, RanksWithTies) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{10, 20, 30, 40, 50};
  const std::vector<double> c{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(a, b), 1.0, 1e-12);
  EXPECT_NEAR(spearman(a, c), -1.0, 1e-12);
  // monotone transform of one side keeps the rank correlation
  const std::vector<double> d{1, 3, 2, 5, 4};
  std::vector<double> e;
  for (double v : d) e.push_back(std::exp(v));
  EXPECT_NEAR(spearman(a, d), spearman(a, e), 1e-12);
  const std::vector<double> tied{1, 1, 2, 2, 3};
  EXPECT_NEAR(spearman(tied, tied), 1.0, 1e-12);
}
