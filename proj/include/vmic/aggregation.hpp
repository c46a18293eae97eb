#pragma once

// Combining per-block signals into one waveform. Blocks see the same sound
// with different phase shifts, so a plain time-domain mean can cancel; the
// aggregate instead sums per-cell STFT magnitudes and borrows the phase of
// the best block.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/motion.hpp"
#include "vmic/video_io.hpp"

namespace vmic {

// Projects (dx, dy) onto the principal axis of the displacement cloud. The
// sign is chosen so the first non-zero projected sample is positive.
inline AudioSignal project_axis(const motion::DisplacementSignal& signal, double sample_rate) {
  if (signal.samples.empty()) throw validation_error("project.empty", "empty displacement signal");
  const auto dx = signal.dx();
  const auto dy = signal.dy();
  const double mx = dsp::mean(dx);
  const double my = dsp::mean(dy);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    sxx += (dx[i] - mx) * (dx[i] - mx);
    syy += (dy[i] - my) * (dy[i] - my);
    sxy += (dx[i] - mx) * (dy[i] - my);
  }
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);
  AudioSignal out{sample_rate, std::vector<double>(dx.size())};
  for (std::size_t i = 0; i < dx.size(); ++i) out.samples[i] = dx[i] * ux + dy[i] * uy;
  const auto first = std::find_if(out.samples.begin(), out.samples.end(), [](double v) { return v != 0.0; });
  if (first != out.samples.end() && *first < 0.0)
    for (double& v : out.samples) v = -v;
  return out;
}

struct ScoredSignal {
  AudioSignal signal;
  double score = 0.0;
};

// Score-proportional weights summing to one. Negative scores count as zero;
// if nothing is positive the weights are uniform.
inline std::vector<double> weights_from_scores(std::span<const double> scores) {
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += w[i] = std::max(scores[i], 0.0);
  if (!(total > 0.0)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (double& v : w) v /= total;
  return w;
}

namespace detail {

inline void check_equal_lengths(std::span<const ScoredSignal> signals) {
  if (signals.empty()) throw validation_error("aggregate.empty", "no signals to combine");
  for (const auto& s : signals)
    if (s.signal.size() != signals.front().signal.size() || s.signal.size() == 0)
      throw validation_error("aggregate.length", "signals differ in length");
}

inline std::vector<double> scores_of(std::span<const ScoredSignal> signals) {
  std::vector<double> out;
  for (const auto& s : signals) out.push_back(s.score);
  return out;
}

}  // namespace detail

// Per-cell magnitude sum with the reference (highest-scoring, lowest index
// on ties) block's phase, then weighted overlap-add.
inline AudioSignal aggregate(std::span<const ScoredSignal> signals, const dsp::StftParams& params) {
  detail::check_equal_lengths(signals);
  const auto scores = detail::scores_of(signals);
  const auto weights = weights_from_scores(scores);
  const auto ref = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());

  dsp::Stft out = dsp::stft(signals[ref].signal.samples, params);
  std::vector<double> magnitude(out.frames() * out.bins(), 0.0);
  for (std::size_t b = 0; b < signals.size(); ++b) {
    if (weights[b] == 0.0) continue;
    const dsp::Stft s = b == ref ? out : dsp::stft(signals[b].signal.samples, params);
    for (std::size_t m = 0; m < s.frames(); ++m)
      for (std::size_t k = 0; k < s.bins(); ++k) magnitude[m * s.bins() + k] += weights[b] * std::abs(s.at(m, k));
  }
  for (std::size_t m = 0; m < out.frames(); ++m)
    for (std::size_t k = 0; k < out.bins(); ++k) {
      const double phase = std::arg(out.at(m, k));
      out.at(m, k) = std::polar(magnitude[m * out.bins() + k], phase);
    }
  return {signals[ref].signal.sample_rate, dsp::istft(out)};
}

// Weighted time-domain mean, the baseline that suffers from cancellation.
inline AudioSignal naive_average(std::span<const ScoredSignal> signals) {
  detail::check_equal_lengths(signals);
  const auto weights = weights_from_scores(detail::scores_of(signals));
  AudioSignal out{signals.front().signal.sample_rate, std::vector<double>(signals.front().signal.size(), 0.0)};
  for (std::size_t b = 0; b < signals.size(); ++b)
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += weights[b] * signals[b].signal.samples[i];
  return out;
}

struct DenoiseParams {
  double alpha = 2.0;          // over-subtraction factor
  double beta = 0.05;          // spectral floor relative to the input magnitude
  double noise_percentile = 10.0;
};

// Magnitude spectral subtraction, phase preserved.
inline AudioSignal denoise(const AudioSignal& signal, const dsp::StftParams& params, const DenoiseParams& dn = {}) {
  if (signal.size() < 8 * params.window)
    throw validation_error("denoise.length", "denoise needs at least 8 STFT windows of signal");
  dsp::Stft s = dsp::stft(signal.samples, params);
  const auto noise = dsp::noise_floor(s, dn.noise_percentile);
  for (std::size_t m = 0; m < s.frames(); ++m)
    for (std::size_t k = 0; k < s.bins(); ++k) {
      const double mag = std::abs(s.at(m, k));
      const double cleaned = std::max(mag - dn.alpha * noise[k], dn.beta * mag);
      s.at(m, k) = std::polar(cleaned, std::arg(s.at(m, k)));
    }
  return {signal.sample_rate, dsp::istft(s)};
}

}  // namespace vmic
