#pragma once

// Signal-processing helpers shared by scoring, aggregation, direction and
// vibrometry: STFT with weighted overlap-add, detrending, percentiles,
// zero-phase band-pass filtering and Welch PSD.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "vmic/error.hpp"

namespace vmic::dsp {

using Complex = std::complex<double>;

inline std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Smallest integer >= n whose prime factors are 2, 3 and 5 only.
inline std::size_t next_fast_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

inline double mean(std::span<const double> x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double energy(std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

inline double rms(std::span<const double> x) {
  return x.empty() ? 0.0 : std::sqrt(energy(x) / static_cast<double>(x.size()));
}

inline std::vector<double> remove_mean(std::span<const double> x) {
  const double m = mean(x);
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= m;
  return out;
}

// Subtracts the least-squares line.
inline std::vector<double> detrend_linear(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(x.begin(), x.end());
  if (n < 2) return remove_mean(x);
  const double tm = 0.5 * static_cast<double>(n - 1);
  double sxx = 0.0;
  double sxy = 0.0;
  const double ym = mean(x);
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tm;
    sxx += dt * dt;
    sxy += dt * (x[i] - ym);
  }
  const double slope = sxy / sxx;
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - ym - slope * (static_cast<double>(i) - tm);
  return out;
}

// Linear-interpolated percentile, q in [0, 100].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw validation_error("percentile.empty", "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n == 0) return 0.0;
  const double ma = mean(a.first(n));
  const double mb = mean(b.first(n));
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

// ---------------------------------------------------------------------------
// Short-time Fourier transform: periodic Hann analysis and synthesis windows,
// hop = window / 4. The input is padded by one window on each side so every
// sample is covered by the same number of frames; inverse transform divides
// by the accumulated squared window, which makes the round trip exact.

struct StftParams {
  std::size_t window = 256;
  std::size_t hop = 0;  // 0 selects window / 4

  std::size_t effective_hop() const { return hop == 0 ? window / 4 : hop; }
};

// Default analysis window for a sample rate: the power of two covering
// about 50 ms, never below 256 samples (256 at 2.2 kHz, 1024 at 20 kHz).
inline std::size_t default_window(double sample_rate) {
  return std::max<std::size_t>(256, next_power_of_two(static_cast<std::size_t>(std::ceil(0.05 * sample_rate))));
}

class Stft {
 public:
  Stft() = default;
  Stft(std::size_t window, std::size_t hop, std::size_t signal_length, std::size_t frames)
      : window_(window), hop_(hop), signal_length_(signal_length), frames_(frames),
        coeffs_(frames * (window / 2 + 1)) {}

  std::size_t window() const { return window_; }
  std::size_t hop() const { return hop_; }
  std::size_t bins() const { return window_ / 2 + 1; }
  std::size_t frames() const { return frames_; }
  std::size_t signal_length() const { return signal_length_; }

  Complex& at(std::size_t frame, std::size_t bin) { return coeffs_[frame * bins() + bin]; }
  const Complex& at(std::size_t frame, std::size_t bin) const { return coeffs_[frame * bins() + bin]; }
  std::span<Complex> frame(std::size_t m) { return {coeffs_.data() + m * bins(), bins()}; }
  std::span<const Complex> frame(std::size_t m) const { return {coeffs_.data() + m * bins(), bins()}; }

  double bin_frequency(std::size_t bin, double sample_rate) const {
    return static_cast<double>(bin) * sample_rate / static_cast<double>(window_);
  }

 private:
  std::size_t window_ = 0;
  std::size_t hop_ = 0;
  std::size_t signal_length_ = 0;
  std::size_t frames_ = 0;
  std::vector<Complex> coeffs_;
};

inline Stft stft(std::span<const double> x, const StftParams& params) {
  const std::size_t n = params.window;
  const std::size_t hop = params.effective_hop();
  if (!is_power_of_two(n) || n < 4) throw validation_error("stft.window", "STFT window must be a power of two >= 4");
  if (hop == 0 || hop > n) throw validation_error("stft.hop", "STFT hop must be in [1, window]");
  if (x.empty()) throw validation_error("stft.empty", "STFT of an empty signal");

  const std::size_t frames = (x.size() + n + hop - 1) / hop + 1;
  const std::size_t padded = (frames - 1) * hop + n;
  std::vector<double> buffer(padded, 0.0);
  std::copy(x.begin(), x.end(), buffer.begin() + static_cast<std::ptrdiff_t>(n));

  const auto win = periodic_hann(n);
  Stft out(n, hop, x.size(), frames);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> seg(n);
  std::vector<Complex> spec;
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t i = 0; i < n; ++i) seg[i] = buffer[m * hop + i] * win[i];
    fft.fwd(spec, seg);
    std::copy(spec.begin(), spec.begin() + static_cast<std::ptrdiff_t>(out.bins()), out.frame(m).begin());
  }
  return out;
}

inline std::vector<double> istft(const Stft& s) {
  const std::size_t n = s.window();
  const std::size_t hop = s.hop();
  const std::size_t padded = (s.frames() - 1) * hop + n;
  std::vector<double> acc(padded, 0.0);
  std::vector<double> norm(padded, 0.0);
  const auto win = periodic_hann(n);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> spec(n / 2 + 1);
  std::vector<double> seg(n);
  for (std::size_t m = 0; m < s.frames(); ++m) {
    auto f = s.frame(m);
    std::copy(f.begin(), f.end(), spec.begin());
    fft.inv(seg.data(), spec.data(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      acc[m * hop + i] += seg[i] * win[i];
      norm[m * hop + i] += win[i] * win[i];
    }
  }
  std::vector<double> out(s.signal_length());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = norm[i + n];
    out[i] = w > 1e-12 ? acc[i + n] / w : 0.0;
  }
  return out;
}

// Frames whose support lies entirely inside the original signal.
inline std::pair<std::size_t, std::size_t> full_frame_range(const Stft& s) {
  const std::size_t first = s.window() / s.hop();
  const std::size_t last = s.signal_length() / s.hop();  // inclusive
  if (s.signal_length() < s.window()) return {first, first - 1};
  return {first, std::min(last, s.frames() - 1)};
}

// Per-bin q-th percentile of |S| over the fully covered frames.
inline std::vector<double> bin_percentile(const Stft& s, double q) {
  auto [first, last] = full_frame_range(s);
  if (last < first) {
    first = 0;
    last = s.frames() - 1;
  }
  std::vector<double> out(s.bins());
  std::vector<double> column;
  for (std::size_t k = 0; k < s.bins(); ++k) {
    column.clear();
    for (std::size_t m = first; m <= last; ++m) column.push_back(std::abs(s.at(m, k)));
    out[k] = percentile(column, q);
  }
  return out;
}

// Noise magnitude per bin: the per-bin percentile floor, median-smoothed
// across +-halfwidth neighbouring bins so that stationary tones (whose own
// bins never drop to the floor) are not mistaken for noise.
inline std::vector<double> noise_floor(const Stft& s, double q = 10.0, std::size_t halfwidth = 8) {
  const auto floor = bin_percentile(s, q);
  std::vector<double> out(floor.size());
  for (std::size_t k = 0; k < floor.size(); ++k) {
    const std::size_t lo = k > halfwidth ? k - halfwidth : 0;
    const std::size_t hi = std::min(floor.size() - 1, k + halfwidth);
    out[k] = median({floor.begin() + static_cast<std::ptrdiff_t>(lo), floor.begin() + static_cast<std::ptrdiff_t>(hi) + 1});
  }
  return out;
}

// Mean magnitude spectrum over all STFT frames.
inline std::vector<double> mean_magnitude(const Stft& s) {
  std::vector<double> out(s.bins(), 0.0);
  for (std::size_t m = 0; m < s.frames(); ++m)
    for (std::size_t k = 0; k < s.bins(); ++k) out[k] += std::abs(s.at(m, k));
  for (double& v : out) v /= static_cast<double>(s.frames());
  return out;
}

// ---------------------------------------------------------------------------
// Zero-phase band-pass via a frequency-domain mask with raised-cosine edges.
// The signal is extended by its mirror image so the periodic FFT sees no
// jump at the boundaries.

inline std::vector<double> bandpass(std::span<const double> x, double sample_rate, double low_hz, double high_hz,
                                    double taper_hz = -1.0) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (!(high_hz > low_hz)) throw validation_error("bandpass.band", "band-pass upper edge must exceed lower edge");
  const std::size_t m = next_fast_size(2 * n);
  std::vector<double> ext(m, x[0]);
  std::copy(x.begin(), x.end(), ext.begin());
  for (std::size_t i = 0; i < n; ++i) ext[n + i] = x[n - 1 - i];

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> spec;
  fft.fwd(spec, ext);
  const double df = sample_rate / static_cast<double>(m);
  const double taper = taper_hz > 0.0 ? taper_hz : std::max(2.0 * df, 0.05 * (high_hz - low_hz));
  auto edge = [&](double distance) {  // 1 inside the band, 0 beyond the taper
    if (distance >= 0.0) return 1.0;
    if (distance <= -taper) return 0.0;
    return 0.5 + 0.5 * std::cos(std::numbers::pi * distance / taper);
  };
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * df;
    spec[k] *= std::min(edge(f - low_hz), edge(high_hz - f));
  }
  std::vector<double> back(m);
  fft.inv(back.data(), spec.data(), static_cast<Eigen::Index>(m));
  return {back.begin(), back.begin() + static_cast<std::ptrdiff_t>(n)};
}

// ---------------------------------------------------------------------------
// Welch one-sided power spectral density (Hann segments, 50% overlap,
// per-segment mean removal). Units: signal units squared per Hz.

struct Psd {
  double resolution = 0.0;  // Hz per bin
  std::vector<double> power;

  double frequency(std::size_t bin) const { return resolution * static_cast<double>(bin); }
};

inline Psd welch(std::span<const double> x, double sample_rate, std::size_t segment) {
  if (segment < 8 || x.size() < segment)
    throw validation_error("welch.length", "signal shorter than one Welch segment");
  const std::size_t hop = segment / 2;
  const auto win = periodic_hann(segment);
  const double wss = energy(win);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Psd out;
  out.resolution = sample_rate / static_cast<double>(segment);
  out.power.assign(segment / 2 + 1, 0.0);
  std::vector<double> seg(segment);
  std::vector<Complex> spec;
  std::size_t count = 0;
  for (std::size_t start = 0; start + segment <= x.size(); start += hop, ++count) {
    const double m = mean(x.subspan(start, segment));
    for (std::size_t i = 0; i < segment; ++i) seg[i] = (x[start + i] - m) * win[i];
    fft.fwd(spec, seg);
    for (std::size_t k = 0; k < out.power.size(); ++k) out.power[k] += std::norm(spec[k]);
  }
  const double scale = 1.0 / (sample_rate * wss * static_cast<double>(count));
  for (std::size_t k = 0; k < out.power.size(); ++k) {
    out.power[k] *= scale;
    if (k != 0 && k != segment / 2) out.power[k] *= 2.0;
  }
  return out;
}

inline std::size_t welch_segment_count(std::size_t length, std::size_t segment) {
  return length < segment ? 0 : (length - segment) / (segment / 2) + 1;
}

}  // namespace vmic::dsp
