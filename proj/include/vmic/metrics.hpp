#pragma once

// Speech-quality metrics against a reference: segmental SNR and the LPC
// log-likelihood ratio, plus cross-correlation time alignment.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>
#include "json.hpp"

#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/video_io.hpp"

namespace vmic::metrics {

struct Aligned {
  std::vector<double> reference;
  std::vector<double> test;
  long lag = 0;  // test[i + lag] pairs with reference[i]
};

// Full linear cross-correlation c[k] = sum_i a[i] b[i + k] via FFT, for
// k in [-(na - 1), nb - 1], stored at index k + na - 1.
inline std::vector<double> cross_correlation(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = dsp::next_fast_size(a.size() + b.size());
  std::vector<double> pa(n, 0.0), pb(n, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t k = 0; k < n; ++k) fa[k] = std::conj(fa[k]) * fb[k];
  std::vector<double> c;
  fft.inv(c, fa);
  std::vector<double> out(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const long k = static_cast<long>(i) - static_cast<long>(a.size()) + 1;
    out[i] = c[static_cast<std::size_t>((k + static_cast<long>(n)) % static_cast<long>(n))];
  }
  return out;
}

// Shifts `test` by the lag in [-max_lag, max_lag] that maximises the
// cross-correlation, among lags keeping at least half the reference in
// the common support; ties go to the smaller |lag|.
inline Aligned align(std::span<const double> reference, std::span<const double> test, long max_lag) {
  if (reference.empty() || test.empty()) throw validation_error("align.empty", "empty signal");
  const long nr = static_cast<long>(reference.size()), nt = static_cast<long>(test.size());
  auto overlap = [&](long k) { return std::min(nr, nt - k) - std::max(0L, -k); };
  const auto c = cross_correlation(reference, test);
  auto at = [&](long k) { return c[static_cast<std::size_t>(k + nr - 1)]; };
  long best = 0;
  bool found = false;
  for (long mag = 0; mag <= max_lag; ++mag)
    for (long k : {-mag, mag}) {
      if (mag == 0 && k != 0) continue;
      if (k <= -nr || k >= nt || 2 * overlap(k) < nr) continue;
      if (!found || at(k) > at(best)) {
        best = k;
        found = true;
      }
    }
  if (!found) throw validation_error("align.overlap", "no lag leaves half of the reference overlapping");
  Aligned out;
  out.lag = best;
  const long lo = std::max(0L, -best), hi = std::min(nr, nt - best);
  out.reference.assign(reference.begin() + lo, reference.begin() + hi);
  out.test.assign(test.begin() + lo + best, test.begin() + hi + best);
  return out;
}

// ---------------------------------------------------------------------------

inline constexpr double kSegSnrFloor = -10.0;
inline constexpr double kSegSnrCeiling = 35.0;

enum class GainPolicy {
  raw,        // compare samples as given
  match_rms,  // rescale test to the reference RMS first (for normalised files)
};

struct FrameOptions {
  double frame_ms = 30.0;
  GainPolicy gain = GainPolicy::raw;
};

struct SegSnr {
  double db = 0.0;
  std::size_t frames_used = 0;
};

inline std::size_t frame_length(double sample_rate, double frame_ms) {
  const auto n = static_cast<std::size_t>(std::lround(sample_rate * frame_ms / 1000.0));
  if (n < 4) throw validation_error("metrics.frame", "frame shorter than four samples");
  return n;
}

inline std::vector<double> apply_gain(std::span<const double> reference, std::span<const double> test, GainPolicy gain) {
  std::vector<double> out(test.begin(), test.end());
  if (gain == GainPolicy::match_rms) {
    const double rt = dsp::rms(test);
    if (rt > 0.0)
      for (double& v : out) v *= dsp::rms(reference) / rt;
  }
  return out;
}

inline SegSnr segmental_snr(std::span<const double> reference, std::span<const double> test, double sample_rate,
                            const FrameOptions& options = {}) {
  if (reference.size() != test.size()) throw validation_error("metrics.length", "signals differ in length");
  const std::size_t len = frame_length(sample_rate, options.frame_ms);
  if (reference.size() < len) throw validation_error("metrics.length", "signal shorter than one frame");
  const auto t = apply_gain(reference, test, options.gain);
  const std::size_t hop = len / 2;
  std::vector<double> sig, err;
  for (std::size_t s = 0; s + len <= reference.size(); s += hop) {
    double e = 0.0, d = 0.0;
    for (std::size_t i = s; i < s + len; ++i) {
      e += reference[i] * reference[i];
      d += (reference[i] - t[i]) * (reference[i] - t[i]);
    }
    sig.push_back(e);
    err.push_back(d);
  }
  const double peak = *std::max_element(sig.begin(), sig.end());
  SegSnr out;
  double total = 0.0;
  for (std::size_t f = 0; f < sig.size(); ++f) {
    if (!(sig[f] > 0.0) || sig[f] < 1e-8 * peak) continue;
    const double snr = err[f] > 0.0 ? 10.0 * std::log10(sig[f] / err[f]) : kSegSnrCeiling;
    total += std::clamp(snr, kSegSnrFloor, kSegSnrCeiling);
    ++out.frames_used;
  }
  if (out.frames_used == 0) throw data_error("metrics.silent", "every reference frame is silent");
  out.db = total / static_cast<double>(out.frames_used);
  return out;
}

// ---------------------------------------------------------------------------
// LPC log-likelihood ratio.

// Autocorrelation r[0..order] of a frame.
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t order) {
  std::vector<double> r(order + 1, 0.0);
  for (std::size_t k = 0; k <= order; ++k)
    for (std::size_t i = k; i < x.size(); ++i) r[k] += x[i] * x[i - k];
  return r;
}

// Levinson-Durbin: predictor a (a[0] = 1) with sum_k a[k] x[n-k] = e[n].
// Returns empty when the autocorrelation is not positive definite.
inline std::vector<double> levinson(std::span<const double> r) {
  const std::size_t p = r.size() - 1;
  if (!(r[0] > 0.0)) return {};
  std::vector<double> a(p + 1, 0.0), prev;
  a[0] = 1.0;
  double err = r[0];
  for (std::size_t i = 1; i <= p; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc += a[j] * r[i - j];
    const double k = -acc / err;
    prev = a;
    for (std::size_t j = 1; j < i; ++j) a[j] = prev[j] + k * prev[i - j];
    a[i] = k;
    err *= 1.0 - k * k;
    if (!(err > 1e-12 * r[0])) return {};
  }
  return a;
}

// a R a^T with R the Toeplitz matrix of r.
inline double quadratic_form(std::span<const double> a, std::span<const double> r) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) s += a[i] * r[i > j ? i - j : j - i] * a[j];
  return s;
}

struct LlrOptions {
  double frame_ms = 30.0;
  std::size_t order = 10;
  double keep_fraction = 0.95;
};

struct Llr {
  double mean = 0.0;
  std::size_t frames_used = 0;
};

inline Llr mean_llr(std::span<const double> reference, std::span<const double> test, double sample_rate,
                    const LlrOptions& options = {}) {
  if (reference.size() != test.size()) throw validation_error("metrics.length", "signals differ in length");
  if (sample_rate < 2000.0) throw validation_error("metrics.rate", "LLR needs a sample rate of at least 2 kHz");
  const std::size_t len = frame_length(sample_rate, options.frame_ms);
  const std::size_t hop = len / 2;
  const auto win = dsp::periodic_hann(len);
  std::vector<double> fr(len), ft(len), values;
  for (std::size_t s = 0; s + len <= reference.size(); s += hop) {
    for (std::size_t i = 0; i < len; ++i) {
      fr[i] = reference[s + i] * win[i];
      ft[i] = test[s + i] * win[i];
    }
    const auto rr = autocorrelation(fr, options.order);
    const auto rt = autocorrelation(ft, options.order);
    const auto ar = levinson(rr);
    const auto at = levinson(rt);
    if (ar.empty() || at.empty()) continue;
    const double num = quadratic_form(at, rr);
    const double den = quadratic_form(ar, rr);
    if (!(den > 0.0) || !(num > 0.0)) continue;
    values.push_back(std::max(0.0, std::log(num / den)));
  }
  if (values.empty()) throw data_error("metrics.llr_frames", "no frame with a stable LPC fit");
  std::sort(values.begin(), values.end());
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(options.keep_fraction * values.size())));
  Llr out;
  out.frames_used = keep;
  out.mean = std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(keep), 0.0) /
             static_cast<double>(keep);
  return out;
}

// ---------------------------------------------------------------------------

struct MetricReport {
  double seg_snr = 0.0;
  double mean_llr = 0.0;
  long alignment_lag = 0;
  std::size_t frames_used = 0;
};

inline MetricReport evaluate(const AudioSignal& reference, const AudioSignal& test, long max_lag,
                             GainPolicy gain = GainPolicy::raw) {
  if (reference.sample_rate != test.sample_rate)
    throw validation_error("metrics.rate", "reference and test sample rates differ");
  const auto a = align(reference.samples, test.samples, max_lag);
  MetricReport r;
  r.alignment_lag = a.lag;
  const auto snr = segmental_snr(a.reference, a.test, reference.sample_rate, {30.0, gain});
  r.seg_snr = snr.db;
  r.frames_used = snr.frames_used;
  r.mean_llr = mean_llr(a.reference, a.test, reference.sample_rate).mean;
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"seg_snr", r.seg_snr},
          {"mean_llr", r.mean_llr},
          {"alignment_lag", r.alignment_lag},
          {"frames_used", r.frames_used},
          {"pesq", nullptr}};
}

// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> a, std::span<const double> b) {
  auto ranks = [](std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  return dsp::pearson(ra, rb);
}

}  // namespace vmic::metrics
