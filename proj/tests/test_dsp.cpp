#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "vmic/dsp.hpp"

using namespace vmic;
using namespace vmic::dsp;

namespace {

std::vector<double> tone(std::size_t n, double f, double fs, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + phase);
  return x;
}

std::vector<double> white(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

// Direct DFT of one bin, the oracle for the STFT coefficients.
std::complex<double> dft_bin(std::span<const double> x, std::size_t k) {
  std::complex<double> s = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    s += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / n);
  return s;
}

}  // namespace

TEST(Basics, WindowAndSizes) {
  const auto w = periodic_hann(8);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[4], 1.0);
  EXPECT_NEAR(w[2], 0.5, 1e-15);
  EXPECT_TRUE(is_power_of_two(1024));
  EXPECT_FALSE(is_power_of_two(1000));
  EXPECT_EQ(next_power_of_two(1000), 1024u);
  EXPECT_EQ(next_fast_size(97), 100u);
  EXPECT_EQ(default_window(2200.0), 256u);
  EXPECT_EQ(default_window(20000.0), 1024u);
  EXPECT_EQ(default_window(44100.0), 4096u);
}

TEST(Basics, PercentileDetrendPearson) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50.0), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100.0), 4.0);
  EXPECT_THROW(percentile({}, 10.0), Error);

  std::vector<double> line;
  for (int i = 0; i < 50; ++i) line.push_back(3.0 + 0.25 * i);
  for (double v : detrend_linear(line)) EXPECT_NEAR(v, 0.0, 1e-12);

  const auto a = tone(400, 13.0, 400.0);
  std::vector<double> b;
  for (double v : a) b.push_back(-2.0 * v + 1.0);
  EXPECT_NEAR(pearson(a, b), -1.0, 1e-12);
}

TEST(Stft, CoefficientsMatchDirectDft) {
  const auto x = white(300, 1.0, 3);
  const StftParams p{64, 0};
  const auto s = stft(x, p);
  EXPECT_EQ(s.hop(), 16u);
  const auto win = periodic_hann(64);
  const std::size_t m = 9;  // frame start in the zero-padded signal: m*hop - window
  std::vector<double> seg(64);
  for (std::size_t i = 0; i < 64; ++i) {
    const long src = static_cast<long>(m * 16 + i) - 64;
    seg[i] = (src >= 0 && src < 300 ? x[static_cast<std::size_t>(src)] : 0.0) * win[i];
  }
  for (std::size_t k : {0u, 1u, 7u, 32u}) {
    const auto ref = dft_bin(seg, k);
    EXPECT_NEAR(std::abs(s.at(m, k) - ref), 0.0, 1e-10);
  }
}

TEST(Stft, InverseIsExactForAnyLength) {
  for (std::size_t n : {1u, 17u, 256u, 1001u}) {
    const auto x = white(n, 1.0, n);
    for (std::size_t w : {16u, 256u}) {
      const auto y = istft(stft(x, {w, 0}));
      ASSERT_EQ(y.size(), x.size());
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], x[i], 1e-10);
    }
  }
}

TEST(Stft, RejectsBadParameters) {
  const std::vector<double> x(100, 1.0);
  EXPECT_THROW(stft(x, {100, 0}), Error);
  EXPECT_THROW(stft(x, {64, 65}), Error);
  EXPECT_THROW(stft(std::vector<double>{}, {64, 0}), Error);
}

TEST(Stft, NoiseFloorTracksNoiseNotTones) {
  const double fs = 8000.0;
  auto x = white(16000, 0.1, 5);
  const auto t = tone(x.size(), 1000.0, fs, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += t[i];
  const auto s = stft(x, {256, 0});
  const auto floor = noise_floor(s);
  const auto mean = mean_magnitude(s);
  const std::size_t k = 32;  // 1000 Hz
  EXPECT_GT(mean[k], 20.0 * floor[k]);
  // white noise: floor is flat across the band
  EXPECT_NEAR(floor[k] / floor[80], 1.0, 0.3);
}

TEST(Bandpass, KeepsBandAndRemovesOutside) {
  const double fs = 4000.0;
  const std::size_t n = 4000;
  const auto in_band = tone(n, 500.0, fs, 1.0, 0.4);
  const auto low = tone(n, 30.0, fs, 1.0);
  const auto high = tone(n, 1800.0, fs, 1.0);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = in_band[i] + low[i] + high[i];
  const auto y = bandpass(x, fs, 100.0, 1000.0);
  double err = 0.0;
  for (std::size_t i = 200; i + 200 < n; ++i) err = std::max(err, std::abs(y[i] - in_band[i]));
  EXPECT_LT(err, 0.02);
  EXPECT_THROW(bandpass(x, fs, 500.0, 400.0), Error);
}

TEST(Welch, WhiteNoiseLevelAndToneIntegral) {
  const double fs = 1000.0, sigma = 0.5;
  const auto noise = white(200000, sigma, 9);
  const auto p = welch(noise, fs, 256);
  double avg = 0.0;
  for (std::size_t k = 1; k + 1 < p.power.size(); ++k) avg += p.power[k];
  avg /= static_cast<double>(p.power.size() - 2);
  EXPECT_NEAR(avg, 2.0 * sigma * sigma / fs, 0.03 * 2.0 * sigma * sigma / fs);

  const auto s = welch(tone(20000, 125.0, fs, 2.0), fs, 256);
  double total = 0.0;
  for (double v : s.power) total += v * s.resolution;
  EXPECT_NEAR(total, 2.0, 0.02);  // A^2 / 2
  EXPECT_NEAR(s.frequency(static_cast<std::size_t>(std::max_element(s.power.begin(), s.power.end()) - s.power.begin())),
              125.0, s.resolution);
  EXPECT_EQ(welch_segment_count(20000, 256), 155u);
  EXPECT_THROW(welch(std::vector<double>(100, 0.0), fs, 256), Error);
}
