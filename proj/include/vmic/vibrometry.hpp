#pragma once

// Vibration modes of a clamped rod and the Young's modulus implied by the
// first one (cantilever Euler-Bernoulli beam).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/video_io.hpp"

namespace vmic::vibrometry {

struct Peak {
  double frequency_hz = 0.0;
  double power = 0.0;
  double prominence_db = 0.0;
};

struct ModeSpectrum {
  dsp::Psd psd;
  std::vector<Peak> peaks;  // ascending frequency
  double fundamental_hz = 0.0;
};

struct ModeParams {
  std::size_t segment = 0;          // 0 selects 2^ceil(log2 fs)
  double prominence_db = 12.0;      // over the local median
  double neighbourhood = 0.10;      // relative half-width of the median window
  std::size_t min_neighbourhood_bins = 8;
  double min_fundamental_hz = 1.0;
  std::size_t min_segments = 4;
};

inline std::size_t default_segment(double sample_rate) {
  return dsp::next_power_of_two(static_cast<std::size_t>(std::ceil(sample_rate)));
}

// Vertex of a parabola through log powers, as a bin offset in [-0.5, 0.5].
inline double log_parabolic_offset(double left, double mid, double right) {
  if (!(left > 0.0 && mid > 0.0 && right > 0.0)) return 0.0;
  const double a = std::log(left), b = std::log(mid), c = std::log(right);
  const double denom = a - 2.0 * b + c;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

inline ModeSpectrum mode_spectrum(const AudioSignal& signal, const ModeParams& params = {}) {
  const std::size_t segment = params.segment ? params.segment : default_segment(signal.sample_rate);
  if (dsp::welch_segment_count(signal.size(), segment) < params.min_segments)
    throw validation_error("modes.length", "signal shorter than the required number of Welch segments");
  ModeSpectrum out;
  out.psd = dsp::welch(signal.samples, signal.sample_rate, segment);
  const auto& p = out.psd.power;
  const std::size_t n = p.size();
  const double ratio = std::pow(10.0, params.prominence_db / 10.0);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (!(p[k] > p[k - 1] && p[k] >= p[k + 1])) continue;
    const double f = out.psd.frequency(k);
    const auto half = std::max(params.min_neighbourhood_bins,
                               static_cast<std::size_t>(std::lround(params.neighbourhood * f / out.psd.resolution)));
    const std::size_t lo = k > half ? k - half : 0;
    const std::size_t hi = std::min(n - 1, k + half);
    const double local = dsp::median({p.begin() + static_cast<std::ptrdiff_t>(lo), p.begin() + static_cast<std::ptrdiff_t>(hi) + 1});
    if (!(p[k] >= ratio * local)) continue;
    const double refined = (static_cast<double>(k) + log_parabolic_offset(p[k - 1], p[k], p[k + 1])) * out.psd.resolution;
    out.peaks.push_back({refined, p[k], 10.0 * std::log10(p[k] / local)});
  }
  const auto it = std::find_if(out.peaks.begin(), out.peaks.end(),
                               [&](const Peak& pk) { return pk.frequency_hz > params.min_fundamental_hz; });
  if (it == out.peaks.end()) throw data_error("modes.none", "no vibration mode found");
  out.fundamental_hz = it->frequency_hz;
  return out;
}

struct RodSpec {
  double length_m = 0.0;
  double density_kg_m3 = 0.0;
  double diameter_m = 0.0;

  double area() const { return std::numbers::pi * diameter_m * diameter_m / 4.0; }
  double second_moment() const { return std::numbers::pi * std::pow(diameter_m, 4) / 64.0; }
};

inline constexpr double kClampedFreeLambda1 = 1.87510407;

inline void validate(const RodSpec& rod) {
  if (!(rod.length_m > 0.0 && rod.density_kg_m3 > 0.0 && rod.diameter_m > 0.0))
    throw validation_error("rod.spec", "rod length, density and diameter must be positive");
}

// E = (2 pi f1 / lambda1^2)^2 rho A L^4 / I
inline double youngs_modulus(double fundamental_hz, const RodSpec& rod) {
  validate(rod);
  if (!(fundamental_hz > 0.0)) throw validation_error("rod.frequency", "fundamental must be positive");
  const double w = 2.0 * std::numbers::pi * fundamental_hz / (kClampedFreeLambda1 * kClampedFreeLambda1);
  return w * w * rod.density_kg_m3 * rod.area() * std::pow(rod.length_m, 4) / rod.second_moment();
}

// First natural frequency of a cantilever with modulus E.
inline double first_mode_frequency(double youngs_modulus_pa, const RodSpec& rod) {
  validate(rod);
  if (!(youngs_modulus_pa > 0.0)) throw validation_error("rod.modulus", "modulus must be positive");
  return kClampedFreeLambda1 * kClampedFreeLambda1 / (2.0 * std::numbers::pi) *
         std::sqrt(youngs_modulus_pa * rod.second_moment() / (rod.density_kg_m3 * rod.area() * std::pow(rod.length_m, 4)));
}

struct ModeSplit {
  AudioSignal mode1;
  AudioSignal residual;
};

// Zero-phase band-pass at f1 +- 5%; the residual is the exact remainder.
inline ModeSplit first_mode_decompose(const AudioSignal& signal, double fundamental_hz) {
  if (!(fundamental_hz > 0.0 && fundamental_hz < 0.5 * signal.sample_rate))
    throw validation_error("modes.fundamental", "fundamental must lie in (0, Nyquist)");
  ModeSplit out{{signal.sample_rate, dsp::bandpass(signal.samples, signal.sample_rate, 0.95 * fundamental_hz,
                                                   1.05 * fundamental_hz)},
                {signal.sample_rate, std::vector<double>(signal.size())}};
  for (std::size_t i = 0; i < signal.size(); ++i) out.residual.samples[i] = signal.samples[i] - out.mode1.samples[i];
  return out;
}

inline nlohmann::json to_json(const ModeSpectrum& s, std::optional<double> youngs_modulus_pa = std::nullopt) {
  nlohmann::json peaks = nlohmann::json::array();
  for (const auto& p : s.peaks)
    peaks.push_back({{"hz", p.frequency_hz}, {"power_db", 10.0 * std::log10(p.power)}, {"prominence_db", p.prominence_db}});
  nlohmann::json j{{"fundamental_hz", s.fundamental_hz}, {"peaks", peaks}};
  if (youngs_modulus_pa) j["youngs_modulus_pa"] = *youngs_modulus_pa;
  return j;
}

}  // namespace vmic::vibrometry
