#pragma once

// Sound-arrival direction from per-block time shifts: cross-correlate every
// block against a reference block, then fit a plane to the delays over the
// image. The plane's gradient points along the wave's travel.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/motion.hpp"
#include "vmic/parallel.hpp"
#include "vmic/synth.hpp"
#include "vmic/video_io.hpp"

namespace vmic::direction {

struct DelayEstimate {
  double tau = 0.0;  // frames; positive when `other` lags `reference`
  int integer_lag = 0;
  bool defined = true;
};

// tau = argmax_k sum_i ref[i] * other[i + k] over |k| <= max_lag, refined
// with the three-point vertex formula. Ties go to the smaller |k|.
inline DelayEstimate block_delay(std::span<const double> reference, std::span<const double> other, int max_lag) {
  if (reference.size() != other.size()) throw validation_error("delay.length", "signals differ in length");
  if (max_lag < 1) throw validation_error("delay.max_lag", "max_lag must be at least 1");
  const int n = static_cast<int>(reference.size());
  if (2 * max_lag >= n) throw validation_error("delay.max_lag", "max_lag must be well below the signal length");
  if (dsp::energy(reference) == 0.0 || dsp::energy(other) == 0.0) return {0.0, 0, false};

  auto xcorr = [&](int k) {
    double s = 0.0;
    const int lo = std::max(0, -k), hi = std::min(n, n - k);
    for (int i = lo; i < hi; ++i) s += reference[i] * other[i + k];
    return s;
  };
  std::vector<double> c(2 * max_lag + 3);
  for (int k = -max_lag - 1; k <= max_lag + 1; ++k) c[k + max_lag + 1] = xcorr(k);
  auto at = [&](int k) { return c[k + max_lag + 1]; };

  int best = 0;
  for (int mag = 1; mag <= max_lag; ++mag)
    for (int k : {-mag, mag})
      if (at(k) > at(best)) best = k;
  DelayEstimate out;
  out.integer_lag = best;
  out.tau = best + motion::subpixel_quadratic(at(best - 1), at(best), at(best + 1));
  return out;
}

struct DelayPoint {
  std::size_t block_id = 0;
  Vec2 position;
  double tau = 0.0;
  double weight = 1.0;
};

struct DirectionFit {
  Vec2 direction;          // unit vector, or (0, 0) when degenerate
  double slowness = 0.0;   // frames per pixel
  double intercept = 0.0;  // frames
  double residual_rms = 0.0;
  bool degenerate = false;  // delays show no spatial gradient
  double gradient_x = 0.0;
  double gradient_y = 0.0;
};

// Below this predicted delay span across the blocks (frames) the plane is
// flat within the resolution of sub-frame delay estimates.
inline constexpr double kDegenerateSpanFrames = 0.05;

// Weighted least squares of tau = a x + b y + c.
inline DirectionFit fit_direction(std::span<const DelayPoint> points) {
  if (points.size() < 3) throw validation_error("direction.geometry", "need at least three blocks with defined delays");
  double wsum = 0.0;
  for (const auto& p : points) {
    if (!(p.weight >= 0.0)) throw validation_error("direction.weight", "weights must be non-negative");
    wsum += p.weight;
  }
  if (!(wsum > 0.0)) throw validation_error("direction.weight", "weights sum to zero");

  // Collinearity: the weighted position covariance must have full rank.
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.weight * p.position.x;
    my += p.weight * p.position.y;
  }
  mx /= wsum;
  my /= wsum;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector2d d(p.position.x - mx, p.position.y - my);
    cov += p.weight * d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double big = eig.eigenvalues()(1), small = eig.eigenvalues()(0);
  if (!(big > 0.0) || small <= 1e-9 * big)
    throw validation_error("direction.geometry", "block positions are collinear");

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    const double s = std::sqrt(p.weight / wsum);
    a.row(i) << s * p.position.x, s * p.position.y, s;
    b(i) = s * p.tau;
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(b);

  DirectionFit fit;
  fit.gradient_x = coef(0);
  fit.gradient_y = coef(1);
  fit.intercept = coef(2);
  fit.slowness = std::hypot(coef(0), coef(1));
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double v = coef(0) * points[i].position.x + coef(1) * points[i].position.y;
    lo = i ? std::min(lo, v) : v;
    hi = i ? std::max(hi, v) : v;
  }
  fit.degenerate = !(hi - lo > kDegenerateSpanFrames);
  if (!fit.degenerate) fit.direction = {coef(0) / fit.slowness, coef(1) / fit.slowness};
  double r2 = 0.0;
  for (const auto& p : points) {
    const double r = p.tau - (coef(0) * p.position.x + coef(1) * p.position.y + coef(2));
    r2 += p.weight * r * r;
  }
  fit.residual_rms = std::sqrt(r2 / wsum);
  return fit;
}

// Angle between two directions in degrees.
inline double angle_between_deg(Vec2 a, Vec2 b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return 180.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Delay field over a set of block signals.

struct BlockInput {
  std::size_t block_id = 0;
  Vec2 center;
  std::vector<double> samples;
  double score = 0.0;
};

struct DelayOptions {
  int max_lag = 50;
  double band_low_hz = 85.0;
  double band_high_hz = 4000.0;  // narrowed to 0.45 fs when needed
  int workers = 1;
};

struct DelayField {
  std::map<std::size_t, double> delays;
  std::map<std::size_t, double> weights;
  std::vector<std::size_t> undefined;  // blocks without a usable delay
  std::size_t reference_block = 0;
  DirectionFit fit;
};

// Max lag bounded by the time sound needs to cross the scene twice, when the
// pixel pitch is known; otherwise the configured cap.
inline int physical_max_lag(double frame_rate, double extent_px, double pixel_pitch_mm, int cap = 50) {
  if (!(pixel_pitch_mm > 0.0)) return cap;
  const double seconds = extent_px * pixel_pitch_mm * 1e-3 / 340.0;
  return std::max(1, static_cast<int>(std::ceil(frame_rate * seconds * 2.0)));
}

inline std::vector<DelayPoint> delay_points(const DelayField& field, std::span<const BlockInput> blocks) {
  std::vector<DelayPoint> out;
  for (const auto& b : blocks) {
    auto it = field.delays.find(b.block_id);
    if (it != field.delays.end()) out.push_back({b.block_id, b.center, it->second, field.weights.at(b.block_id)});
  }
  return out;
}

// Band-limits every block, measures delays against the highest-scoring
// block (lowest id on ties) and fits the direction. Weights are the
// non-negative scores, uniform if none is positive.
inline DelayField delay_field(std::span<const BlockInput> blocks, double sample_rate, const DelayOptions& options = {}) {
  if (blocks.size() < 3) throw validation_error("direction.geometry", "need at least three blocks");
  const double hi = std::min(options.band_high_hz, 0.45 * sample_rate);
  std::vector<std::vector<double>> filtered(blocks.size());
  parallel_for(blocks.size(), options.workers, [&](std::size_t i) {
    filtered[i] = dsp::bandpass(dsp::remove_mean(blocks[i].samples), sample_rate, options.band_low_hz, hi);
  });
  std::size_t ref = 0;
  for (std::size_t i = 1; i < blocks.size(); ++i)
    if (blocks[i].score > blocks[ref].score || (blocks[i].score == blocks[ref].score && blocks[i].block_id < blocks[ref].block_id))
      ref = i;

  std::vector<DelayEstimate> est(blocks.size());
  parallel_for(blocks.size(), options.workers, [&](std::size_t i) {
    est[i] = i == ref ? DelayEstimate{} : block_delay(filtered[ref], filtered[i], options.max_lag);
  });
  bool any_positive = false;
  for (const auto& b : blocks) any_positive = any_positive || b.score > 0.0;

  DelayField field;
  field.reference_block = blocks[ref].block_id;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!est[i].defined) {
      field.undefined.push_back(blocks[i].block_id);
      continue;
    }
    field.delays[blocks[i].block_id] = est[i].tau;
    field.weights[blocks[i].block_id] = any_positive ? std::max(blocks[i].score, 0.0) : 1.0;
  }
  const auto points = delay_points(field, blocks);
  field.fit = fit_direction(points);
  return field;
}

// ---------------------------------------------------------------------------
// Stability across time segments and frequency bands.

struct Band {
  double low_hz = 85.0;
  double high_hz = 4000.0;
};

struct StabilityReport {
  std::vector<DirectionFit> segment_fits;
  std::vector<DirectionFit> band_fits;
  double max_segment_deviation_deg = 0.0;
  double max_band_deviation_deg = 0.0;
  double max_deviation_deg = 0.0;  // over every pair of fits
};

inline double max_pairwise_deviation(std::span<const DirectionFit> fits) {
  double worst = 0.0;
  for (std::size_t i = 0; i < fits.size(); ++i)
    for (std::size_t j = i + 1; j < fits.size(); ++j)
      worst = std::max(worst, angle_between_deg(fits[i].direction, fits[j].direction));
  return worst;
}

inline StabilityReport direction_stability(std::span<const BlockInput> blocks, double sample_rate, std::size_t segments,
                                           std::span<const Band> bands, const DelayOptions& options = {}) {
  if (segments < 2) throw validation_error("stability.segments", "need at least two segments");
  if (blocks.empty()) throw validation_error("direction.geometry", "need at least three blocks");
  const std::size_t n = blocks.front().samples.size();
  const std::size_t len = n / segments;
  if (len <= static_cast<std::size_t>(4 * options.max_lag))
    throw validation_error("stability.segments", "segments too short for the lag range");
  StabilityReport report;
  for (std::size_t s = 0; s < segments; ++s) {
    std::vector<BlockInput> part(blocks.begin(), blocks.end());
    for (auto& b : part)
      b.samples.assign(b.samples.begin() + static_cast<std::ptrdiff_t>(s * len),
                       b.samples.begin() + static_cast<std::ptrdiff_t>((s + 1) * len));
    report.segment_fits.push_back(delay_field(part, sample_rate, options).fit);
  }
  for (const Band& band : bands) {
    DelayOptions o = options;
    o.band_low_hz = band.low_hz;
    o.band_high_hz = band.high_hz;
    report.band_fits.push_back(delay_field(blocks, sample_rate, o).fit);
  }
  report.max_segment_deviation_deg = max_pairwise_deviation(report.segment_fits);
  report.max_band_deviation_deg = max_pairwise_deviation(report.band_fits);
  std::vector<DirectionFit> all = report.segment_fits;
  all.insert(all.end(), report.band_fits.begin(), report.band_fits.end());
  report.max_deviation_deg = max_pairwise_deviation(all);
  return report;
}

// ---------------------------------------------------------------------------
// Export.

inline void write_delay_csv(const std::filesystem::path& path, const DelayField& field, std::span<const BlockInput> blocks,
                            std::span<const std::string> header_comments = {}) {
  std::ofstream out(path);
  if (!out) throw data_error("csv.write", "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << "block_id,x,y,tau_frames,weight\n";
  out.precision(10);
  for (const auto& b : blocks) {
    auto it = field.delays.find(b.block_id);
    if (it == field.delays.end()) continue;
    out << b.block_id << ',' << b.center.x << ',' << b.center.y << ',' << it->second << ','
        << field.weights.at(b.block_id) << '\n';
  }
}

inline nlohmann::json to_json(const DirectionFit& fit) {
  return {{"dx", fit.direction.x},
          {"dy", fit.direction.y},
          {"slowness_frames_per_px", fit.slowness},
          {"intercept_frames", fit.intercept},
          {"residual_rms", fit.residual_rms},
          {"degenerate", fit.degenerate}};
}

}  // namespace vmic::direction
