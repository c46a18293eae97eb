#pragma once

// Sub-pixel motion of a single block: the correlation operator evaluated at
// a few integer lags around the tracked integer displacement, polynomial
// peak interpolation, and a 16-bit fixed-point variant of the inner loop.
//
// Sign convention: a positive lag means the current patch content has moved
// toward +x (+y). K(lag) = sum over the reference region of
// ref(p) * cur(p + lag), so content translated by +1 peaks at lag +1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vmic/error.hpp"
#include "vmic/synth.hpp"
#include "vmic/video_io.hpp"

namespace vmic::motion {

enum class Interpolation { quadratic, quartic };
enum class Dimensionality { one_d, two_d };
enum class Arithmetic { float64, fixed16 };

struct MotionMode {
  Interpolation interpolation = Interpolation::quadratic;
  Dimensionality dimensionality = Dimensionality::one_d;
  Arithmetic arithmetic = Arithmetic::float64;
};

struct Lag {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Lag&, const Lag&) = default;
};

// line3: {-1, 0, 1}; line5: {-2..2}; square3: 3x3 neighbourhood;
// cross5: {-2..2} along each axis (nine lags).
enum class LagShape { line3, line5, square3, cross5 };

inline LagShape lag_shape(const MotionMode& mode) {
  const bool quartic = mode.interpolation == Interpolation::quartic;
  if (mode.dimensionality == Dimensionality::one_d) return quartic ? LagShape::line5 : LagShape::line3;
  return quartic ? LagShape::cross5 : LagShape::square3;
}

inline std::vector<Lag> lag_set(LagShape shape) {
  std::vector<Lag> lags;
  switch (shape) {
    case LagShape::line3:
      for (int x = -1; x <= 1; ++x) lags.push_back({x, 0});
      break;
    case LagShape::line5:
      for (int x = -2; x <= 2; ++x) lags.push_back({x, 0});
      break;
    case LagShape::square3:
      for (int y = -1; y <= 1; ++y)
        for (int x = -1; x <= 1; ++x) lags.push_back({x, y});
      break;
    case LagShape::cross5:
      for (int x = -2; x <= 2; ++x) lags.push_back({x, 0});
      for (int y = -2; y <= 2; ++y)
        if (y != 0) lags.push_back({0, y});
      break;
  }
  return lags;
}

// Similarity scores on a square grid of relative lags around `center`.
// Lags outside the evaluated set are absent.
class CorrelationProfile {
 public:
  CorrelationProfile() = default;
  CorrelationProfile(Lag center, int radius)
      : center_(center), radius_(radius),
        values_(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)), std::numeric_limits<double>::quiet_NaN()) {}

  Lag center() const { return center_; }
  int radius() const { return radius_; }

  bool has(int dx, int dy) const {
    return std::abs(dx) <= radius_ && std::abs(dy) <= radius_ && !std::isnan(values_[index(dx, dy)]);
  }
  double at(int dx, int dy) const {
    if (!has(dx, dy)) throw validation_error("profile.lag", "lag not present in correlation profile");
    return values_[index(dx, dy)];
  }
  void set(int dx, int dy, double v) { values_[index(dx, dy)] = v; }

  // Largest score among present lags with |dx|, |dy| <= 1; ties go to the
  // lag with the smaller |dx| + |dy|, then to the earlier lag in row order.
  Lag argmax_near() const {
    Lag best{0, 0};
    double best_value = -std::numeric_limits<double>::infinity();
    int best_l1 = 3;
    for (int l1 = 0; l1 <= 2; ++l1)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (std::abs(dx) + std::abs(dy) != l1 || !has(dx, dy)) continue;
          const double v = at(dx, dy);
          if (v > best_value || (v == best_value && l1 < best_l1)) {
            best_value = v;
            best = {dx, dy};
            best_l1 = l1;
          }
        }
    return best;
  }

 private:
  std::size_t index(int dx, int dy) const {
    return static_cast<std::size_t>((dy + radius_) * (2 * radius_ + 1) + (dx + radius_));
  }

  Lag center_{};
  int radius_ = 0;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Peak interpolation.

// Vertex of the parabola through (-1, fm1), (0, f0), (1, fp1), clamped to
// [-1, 1]. A flat profile (zero denominator) yields 0. A convex profile has
// no interior peak: it points to the higher end when monotonic, else 0.
inline double subpixel_quadratic(double fm1, double f0, double fp1) {
  const double denom = 2.0 * fp1 + 2.0 * fm1 - 4.0 * f0;
  if (denom == 0.0 || !std::isfinite(denom)) return 0.0;
  if (denom > 0.0) return fp1 > f0 && f0 > fm1 ? 1.0 : fm1 > f0 && f0 > fp1 ? -1.0 : 0.0;
  const double d = (fm1 - fp1) / denom;
  return std::isfinite(d) ? std::clamp(d, -1.0, 1.0) : 0.0;
}

// Coefficients c0..c4 of the quartic through samples at x = -2..2.
inline std::array<double, 5> quartic_coefficients(const std::array<double, 5>& f) {
  const double fm2 = f[0], fm1 = f[1], f0 = f[2], fp1 = f[3], fp2 = f[4];
  return {f0,
          (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / 12.0,
          (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / 24.0,
          (-fm2 + 2.0 * fm1 - 2.0 * fp1 + fp2) / 12.0,
          (fm2 - 4.0 * fm1 + 6.0 * f0 - 4.0 * fp1 + fp2) / 24.0};
}

// Maximizer in [-1, 1] of the quartic through five samples at x = -2..2.
// Newton iterations on the derivative start from the quadratic estimate; if
// they do not settle on an interior maximum that beats both endpoints, the
// quadratic estimate is returned instead.
inline double subpixel_quartic(const std::array<double, 5>& f) {
  const double fallback = subpixel_quadratic(f[1], f[2], f[3]);
  const auto c = quartic_coefficients(f);
  auto p = [&](double x) { return c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4]))); };
  auto dp = [&](double x) { return c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4])); };
  auto ddp = [&](double x) { return 2.0 * c[2] + x * (6.0 * c[3] + x * 12.0 * c[4]); };

  double x = fallback;
  bool converged = false;
  for (int i = 0; i < 50; ++i) {
    const double curvature = ddp(x);
    if (curvature == 0.0 || !std::isfinite(curvature)) break;
    const double step = dp(x) / curvature;
    x -= step;
    if (!std::isfinite(x) || std::abs(x) > 2.0) break;
    if (std::abs(step) < 1e-9) {
      converged = true;
      break;
    }
  }
  if (!converged || std::abs(x) > 1.0 || !(ddp(x) < 0.0)) return fallback;
  if (p(x) < p(-1.0) || p(x) < p(1.0)) return fallback;
  return x;
}

// Least-squares quadratic surface a x^2 + b y^2 + c xy + d x + e y + f over
// the 3x3 grid (values row-major, y = -1..1 outer, x = -1..1 inner). Returns
// its stationary point when that is a maximum inside [-1, 1]^2, otherwise
// independent 1D parabola vertices along the centre row and column.
inline Vec2 subpixel_2d(const std::array<double, 9>& values) {
  static const Eigen::Matrix<double, 6, 9> pinv = [] {
    Eigen::Matrix<double, 9, 6> design;
    int row = 0;
    for (int y = -1; y <= 1; ++y)
      for (int x = -1; x <= 1; ++x, ++row) design.row(row) << x * x, y * y, x * y, x, y, 1.0;
    return Eigen::Matrix<double, 6, 9>((design.transpose() * design).inverse() * design.transpose());
  }();
  const Eigen::Map<const Eigen::Matrix<double, 9, 1>> v(values.data());
  const Eigen::Matrix<double, 6, 1> k = pinv * v;
  const double a = k[0], b = k[1], c = k[2], d = k[3], e = k[4];
  const double det = 4.0 * a * b - c * c;
  if (a < 0.0 && det > 0.0) {
    const double x = (c * e - 2.0 * b * d) / det;
    const double y = (c * d - 2.0 * a * e) / det;
    if (std::abs(x) <= 1.0 && std::abs(y) <= 1.0) return {x, y};
  }
  return {subpixel_quadratic(values[3], values[4], values[5]), subpixel_quadratic(values[1], values[4], values[7])};
}

// Sub-pixel offset of the profile's peak relative to its centre, using the
// estimator matching the lags present.
inline Vec2 subpixel(const CorrelationProfile& p, LagShape shape) {
  switch (shape) {
    case LagShape::line3:
      return {subpixel_quadratic(p.at(-1, 0), p.at(0, 0), p.at(1, 0)), 0.0};
    case LagShape::line5:
      return {subpixel_quartic({p.at(-2, 0), p.at(-1, 0), p.at(0, 0), p.at(1, 0), p.at(2, 0)}), 0.0};
    case LagShape::square3: {
      std::array<double, 9> v{};
      for (int y = -1; y <= 1; ++y)
        for (int x = -1; x <= 1; ++x) v[static_cast<std::size_t>((y + 1) * 3 + x + 1)] = p.at(x, y);
      return subpixel_2d(v);
    }
    case LagShape::cross5:
      return {subpixel_quartic({p.at(-2, 0), p.at(-1, 0), p.at(0, 0), p.at(1, 0), p.at(2, 0)}),
              subpixel_quartic({p.at(0, -2), p.at(0, -1), p.at(0, 0), p.at(0, 1), p.at(0, 2)})};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Operation counting. The tracker and kernels take a counter policy; the
// default one compiles to nothing.

struct NullCounter {
  void add(std::uint64_t) {}
};

struct OpCounter {
  std::uint64_t ops = 0;
  void add(std::uint64_t n) { ops += n; }
};

template <typename T>
struct Patch {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  T at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

template <typename T>
struct ImageView {
  const T* data = nullptr;
  int width = 0;
  int height = 0;
  std::ptrdiff_t stride = 0;

  const T* row(int y) const { return data + y * stride; }
};

namespace detail {

// One multiply and one add per reference pixel.
template <typename Acc, typename R, typename C, typename Counter>
Acc dot_region(const R* ref, std::ptrdiff_t ref_stride, const C* cur, std::ptrdiff_t cur_stride, int w, int h,
               Counter& counter) {
  Acc acc = 0;
  for (int y = 0; y < h; ++y) {
    const R* r = ref + y * ref_stride;
    const C* c = cur + y * cur_stride;
    if constexpr (std::is_same_v<Acc, std::int32_t>) {
      for (int x = 0; x < w; ++x)
        acc += static_cast<std::int32_t>(r[x]) * static_cast<std::int32_t>(static_cast<std::int16_t>(c[x]));
    } else {
      for (int x = 0; x < w; ++x) acc += static_cast<Acc>(r[x]) * static_cast<Acc>(c[x]);
    }
  }
  counter.add(2ull * static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h));
  return acc;
}

inline int max_abs_dx(std::span<const Lag> lags) {
  int m = 0;
  for (const Lag& l : lags) m = std::max(m, std::abs(l.dx));
  return m;
}

inline int max_abs_dy(std::span<const Lag> lags) {
  int m = 0;
  for (const Lag& l : lags) m = std::max(m, std::abs(l.dy));
  return m;
}

inline void check_patch_pair(int rw, int rh, int cw, int ch, int crop_x, int crop_y) {
  if (rw != cw || rh != ch) throw validation_error("correlate.size", "reference and current patches differ in size");
  auto too_small = [](int extent, int crop) { return crop > 0 ? extent < 2 * crop + 2 : extent < 1; };
  if (too_small(rw, crop_x) || too_small(rh, crop_y))
    throw validation_error("correlate.patch_small", "patch smaller than 2*max_lag + 2");
}

}  // namespace detail

enum class Normalization { none, normalized };

// Correlation profile of two equally sized patches. The reference is cropped
// by max(margin, max |lag|) on each axis so every lag sees the same overlap,
// and made zero-mean over that region. With Normalization::normalized the
// scores are divided by N * sigma_ref * sigma_cur (population deviations),
// which cancels any gain applied to the current patch.
inline CorrelationProfile correlate(const Patch<double>& reference, const Patch<double>& current, std::span<const Lag> lags,
                                    Normalization normalization = Normalization::none, int margin = 0) {
  if (lags.empty()) throw validation_error("correlate.lags", "empty lag set");
  const int crop_x = std::max(margin, detail::max_abs_dx(lags));
  const int crop_y = std::max(margin * (detail::max_abs_dy(lags) > 0 ? 1 : 0), detail::max_abs_dy(lags));
  detail::check_patch_pair(reference.width, reference.height, current.width, current.height, crop_x, crop_y);
  const int w = reference.width - 2 * crop_x;
  const int h = reference.height - 2 * crop_y;

  std::vector<double> ref(static_cast<std::size_t>(w) * h);
  double sum = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) sum += ref[static_cast<std::size_t>(y) * w + x] = reference.at(x + crop_x, y + crop_y);
  const double n = static_cast<double>(ref.size());
  const double m = sum / n;
  double ref_var = 0.0;
  for (double& v : ref) {
    v -= m;
    ref_var += v * v;
  }

  double scale = 1.0;
  if (normalization == Normalization::normalized) {
    double cm = 0.0;
    for (double v : current.values) cm += v;
    cm /= static_cast<double>(current.values.size());
    double cur_var = 0.0;
    for (double v : current.values) cur_var += (v - cm) * (v - cm);
    const double sigma_r = std::sqrt(ref_var / n);
    const double sigma_c = std::sqrt(cur_var / static_cast<double>(current.values.size()));
    scale = sigma_r > 0.0 && sigma_c > 0.0 ? 1.0 / (n * sigma_r * sigma_c) : 0.0;
  }

  int radius = 0;
  for (const Lag& l : lags) radius = std::max({radius, std::abs(l.dx), std::abs(l.dy)});
  CorrelationProfile profile({0, 0}, radius);
  NullCounter none;
  for (const Lag& l : lags) {
    const double* cur = current.values.data() + static_cast<std::ptrdiff_t>(crop_y + l.dy) * current.width + (crop_x + l.dx);
    profile.set(l.dx, l.dy, scale * detail::dot_region<double>(ref.data(), w, cur, current.width, w, h, none));
  }
  return profile;
}

// Largest patch area the fixed-point kernel accepts: 255 * 255 * 2^15 < 2^31
// (gain 1). Smaller patches get a larger gain from fixed_point_gain().
inline constexpr int kFixedPointMaxArea = 1 << 15;

// Power-of-two gain applied to the fixed-point reference. Scaling lets the
// integer mean be subtracted exactly (8x8: k * sum / n is an integer), which
// keeps the fixed path within rounding of the float path.
inline int fixed_point_gain(std::int64_t area) {
  int k = 1;
  while (2 * k * 255 <= 32767 && static_cast<std::int64_t>(2 * k) * 255 * 255 * area < (std::int64_t{1} << 31)) k *= 2;
  return k;
}

// Zero-mean 16-bit reference: k * pixels minus the rounded k * mean.
inline std::vector<std::int16_t> fixed_point_reference(ImageView<std::uint16_t> region) {
  std::int64_t sum = 0;
  for (int y = 0; y < region.height; ++y)
    for (int x = 0; x < region.width; ++x) sum += region.row(y)[x];
  const std::int64_t n = static_cast<std::int64_t>(region.width) * region.height;
  const std::int64_t k = fixed_point_gain(n);
  const auto mean = static_cast<std::int32_t>((k * sum + n / 2) / n);
  std::vector<std::int16_t> out(static_cast<std::size_t>(n));
  for (int y = 0; y < region.height; ++y)
    for (int x = 0; x < region.width; ++x)
      out[static_cast<std::size_t>(y) * region.width + x] = static_cast<std::int16_t>(k * region.row(y)[x] - mean);
  return out;
}

// 16-bit fixed-point profile of 8-bit patches: zero-mean reference in i16,
// raw current pixels in i16, products accumulated in i32. Scores are the
// plain (unnormalized) operator.
inline CorrelationProfile correlate_fixed_point(const Patch<std::uint8_t>& reference, const Patch<std::uint8_t>& current,
                                                std::span<const Lag> lags, int margin = 0) {
  if (lags.empty()) throw validation_error("correlate.lags", "empty lag set");
  if (reference.width * reference.height > kFixedPointMaxArea)
    throw validation_error("correlate.fixed_overflow",
                           "patch area " + std::to_string(reference.width * reference.height) +
                               " exceeds the fixed-point accumulator limit of " + std::to_string(kFixedPointMaxArea));
  const int crop_x = std::max(margin, detail::max_abs_dx(lags));
  const int crop_y = std::max(margin * (detail::max_abs_dy(lags) > 0 ? 1 : 0), detail::max_abs_dy(lags));
  detail::check_patch_pair(reference.width, reference.height, current.width, current.height, crop_x, crop_y);
  const int w = reference.width - 2 * crop_x;
  const int h = reference.height - 2 * crop_y;

  std::vector<std::uint16_t> ref16(reference.values.begin(), reference.values.end());
  std::vector<std::uint16_t> cur16(current.values.begin(), current.values.end());
  const ImageView<std::uint16_t> inner{ref16.data() + crop_y * reference.width + crop_x, w, h, reference.width};
  const auto ref = fixed_point_reference(inner);
  const double unscale = 1.0 / fixed_point_gain(static_cast<std::int64_t>(w) * h);

  int radius = 0;
  for (const Lag& l : lags) radius = std::max({radius, std::abs(l.dx), std::abs(l.dy)});
  CorrelationProfile profile({0, 0}, radius);
  NullCounter none;
  for (const Lag& l : lags) {
    const std::uint16_t* cur = cur16.data() + static_cast<std::ptrdiff_t>(crop_y + l.dy) * current.width + (crop_x + l.dx);
    profile.set(l.dx, l.dy, unscale * static_cast<double>(detail::dot_region<std::int32_t>(ref.data(), w, cur, current.width, w, h, none)));
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Tracking.

struct DisplacementSample {
  std::size_t t = 0;
  double dx = 0.0;
  double dy = 0.0;
  int integer_x = 0;
  int integer_y = 0;
};

struct DisplacementSignal {
  std::size_t block_id = 0;
  std::size_t reference_frame_index = 0;
  std::vector<DisplacementSample> samples;
  bool lost = false;
  std::size_t lost_from = 0;  // first frame whose sample is padded
  std::uint64_t setup_ops = 0;     // reference calibration, outside the per-frame count
  std::uint64_t recentre_ops = 0;  // extra profiles after recentring

  std::vector<double> dx() const {
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].dx;
    return out;
  }
  std::vector<double> dy() const {
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].dy;
    return out;
  }
};

struct TrackOptions {
  MotionMode mode;
  int margin = 4;  // pixels around the block available to the search
};

// Tracks one block against a fixed reference. Views passed to the
// constructor and to step() cover the block plus `margin` pixels on every
// side, with the block at (margin, margin).
template <typename Counter = NullCounter>
class BlockTracker {
 public:
  BlockTracker(ImageView<std::uint16_t> reference, int block_width, int block_height, const TrackOptions& options,
               Counter& counter)
      : options_(options), shape_(lag_shape(options.mode)), lags_(lag_set(shape_)),
        radius_(shape_ == LagShape::line5 || shape_ == LagShape::cross5 ? 2 : 1),
        width_(block_width), height_(block_height), counter_(counter) {
    if (options.margin < radius_ + 1)
      throw validation_error("track.margin", "margin must exceed the lag radius");
    const ImageView<std::uint16_t> inner{reference.row(options.margin) + options.margin, width_, height_, reference.stride};
    if (options.mode.arithmetic == Arithmetic::fixed16) {
      if (width_ * height_ > kFixedPointMaxArea)
        throw validation_error("track.fixed_overflow", "block too large for the fixed-point accumulator");
      ref_fixed_ = fixed_point_reference(inner);
    } else {
      double sum = 0.0;
      ref_float_.resize(static_cast<std::size_t>(width_) * height_);
      for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) sum += ref_float_[static_cast<std::size_t>(y) * width_ + x] = inner.row(y)[x];
      const double m = sum / static_cast<double>(ref_float_.size());
      for (double& v : ref_float_) v -= m;
    }
    // The reference against itself defines zero displacement. The plain
    // operator need not peak at lag 0 (per-lag window energy differs), so
    // the home centre walks toward the self-profile's vertex first; a vertex
    // clamped at the profile edge would carry no sensitivity. This one-off
    // work is tallied apart from the per-frame budget.
    CorrelationProfile self = evaluate(reference, home_, nullptr, setup_counter_);
    Vec2 v = subpixel(self, shape_);
    auto spread = [](Vec2 a) { return std::max(std::abs(a.x), std::abs(a.y)); };
    Lag best_home = home_;
    CorrelationProfile best_self = self;
    Vec2 best_v = v;
    for (int i = 0; i < 2; ++i) {
      const Lag next{std::clamp(home_.dx + home_step(v.x), -1, 1), std::clamp(home_.dy + home_step(v.y), -1, 1)};
      if (next.dx == home_.dx && next.dy == home_.dy) break;
      home_ = next;
      self = evaluate(reference, home_, &self, setup_counter_);
      v = subpixel(self, shape_);
      if (spread(v) < spread(best_v)) best_home = home_, best_self = self, best_v = v;
    }
    // An asymmetric profile can point each home at the other; keep the
    // better-centred one.
    home_ = best_home;
    v = best_v;
    bias_ = {home_.dx + v.x, home_.dy + v.y};
    center_ = home_;
  }

  // Returns nullopt once the integer displacement leaves the margin.
  std::optional<DisplacementSample> step(ImageView<std::uint16_t> frame, std::size_t t) {
    CorrelationProfile profile = evaluate(frame, center_, nullptr, counter_);
    Vec2 frac = subpixel(profile, shape_);
    // Keep the centre on the lag nearest the peak, with some hysteresis so a
    // peak near the half-lag does not flip the centre every frame.
    const Lag move{step_toward(frac.x, 0), step_toward(frac.y, 1)};
    if (move.dx != 0 || move.dy != 0) {
      const Lag old_center = center_;
      center_ = {center_.dx + move.dx, center_.dy + move.dy};
      if (!within_margin()) return std::nullopt;
      CorrelationProfile moved = evaluate(frame, center_, &profile, recentre_counter_);
      const Vec2 moved_frac = subpixel(moved, shape_);
      // If the new centre points straight back, the profile is lopsided
      // rather than displaced: stay, and try that direction again only once
      // the estimate saturates.
      if (recentre_step(moved_frac.x) == -move.dx && recentre_step(moved_frac.y) == -move.dy) {
        center_ = old_center;
        if (move.dx != 0) threshold_[0][move.dx > 0] = kSaturated;
        if (move.dy != 0) threshold_[1][move.dy > 0] = kSaturated;
      } else {
        profile = std::move(moved);
        frac = moved_frac;
      }
    }
    DisplacementSample s;
    s.t = t;
    s.integer_x = center_.dx;
    s.integer_y = center_.dy;
    s.dx = center_.dx + frac.x - bias_.x;
    s.dy = center_.dy + frac.y - bias_.y;
    return s;
  }

  LagShape shape() const { return shape_; }
  // Operations spent calibrating against the reference frame, and on
  // re-evaluating profiles after a recentre. The counter passed in sees only
  // the one profile per frame.
  std::uint64_t setup_ops() const { return setup_counter_.ops; }
  std::uint64_t recentre_ops() const { return recentre_counter_.ops; }

 private:
  // Home settles within half a lag of the vertex; frames step only past
  // 0.75, which leaves room for noise before a recentre.
  static int home_step(double offset) { return offset > 0.5 ? 1 : offset < -0.5 ? -1 : 0; }
  static int recentre_step(double offset) { return offset > 0.75 ? 1 : offset < -0.75 ? -1 : 0; }
  int step_toward(double offset, int axis) const {
    return offset > threshold_[axis][1] ? 1 : offset < -threshold_[axis][0] ? -1 : 0;
  }
  static constexpr double kSaturated = 0.999;

  bool within_margin() const {
    const int ry = options_.mode.dimensionality == Dimensionality::two_d ? radius_ : 0;
    return std::abs(center_.dx) + radius_ <= options_.margin && std::abs(center_.dy) + ry <= options_.margin;
  }

  // Profile around `center`; lags already present in `previous` are reused.
  template <typename C>
  CorrelationProfile evaluate(ImageView<std::uint16_t> frame, Lag center, const CorrelationProfile* previous, C& counter) {
    CorrelationProfile profile(center, radius_);
    for (const Lag& l : lags_) {
      const int ax = center.dx + l.dx;
      const int ay = center.dy + l.dy;
      if (previous) {
        const int px = ax - previous->center().dx;
        const int py = ay - previous->center().dy;
        if (previous->has(px, py)) {
          profile.set(l.dx, l.dy, previous->at(px, py));
          continue;
        }
      }
      const std::uint16_t* cur = frame.row(options_.margin + ay) + options_.margin + ax;
      double v;
      if (options_.mode.arithmetic == Arithmetic::fixed16)
        v = static_cast<double>(detail::dot_region<std::int32_t>(ref_fixed_.data(), width_, cur, frame.stride, width_, height_, counter));
      else
        v = detail::dot_region<double>(ref_float_.data(), width_, cur, frame.stride, width_, height_, counter);
      profile.set(l.dx, l.dy, v);
    }
    return profile;
  }

  TrackOptions options_;
  LagShape shape_;
  std::vector<Lag> lags_;
  int radius_;
  int width_;
  int height_;
  Counter& counter_;
  std::vector<double> ref_float_;
  std::vector<std::int16_t> ref_fixed_;
  Vec2 bias_{};
  Lag home_{};
  Lag center_{};
  double threshold_[2][2] = {{0.75, 0.75}, {0.75, 0.75}};  // [axis][direction is positive]
  OpCounter setup_counter_;
  OpCounter recentre_counter_;
};

// Tracks `block` through every frame of `video`, using frame 0 as the fixed
// reference. A block whose integer displacement runs out of margin is marked
// lost and its remaining samples repeat the last valid one.
template <typename Counter = NullCounter>
DisplacementSignal track_block(const FrameSequence& video, const Rect& block, const TrackOptions& options,
                               std::size_t block_id, Counter& counter) {
  const int m = options.margin;
  if (block.x - m < 0 || block.y - m < 0 || block.right() + m > video.width() || block.bottom() + m > video.height())
    throw validation_error("track.bounds", "block plus margin exceeds the frame");
  if (options.mode.arithmetic == Arithmetic::fixed16 && video.bit_depth() != 8)
    throw validation_error("track.fixed_depth", "fixed-point path requires 8-bit video");
  auto view = [&](std::size_t t) {
    return ImageView<std::uint16_t>{video.frame(t).data() + static_cast<std::ptrdiff_t>(block.y - m) * video.width() + (block.x - m),
                                    block.width + 2 * m, block.height + 2 * m, video.width()};
  };
  BlockTracker<Counter> tracker(view(0), block.width, block.height, options, counter);
  DisplacementSignal out;
  out.block_id = block_id;
  out.samples.resize(video.frame_count());
  // Frame 0 was already correlated with itself to get the bias; its sample
  // is zero by construction.
  for (std::size_t t = 1; t < video.frame_count(); ++t) {
    auto s = tracker.step(view(t), t);
    if (!s) {
      out.lost = true;
      out.lost_from = t;
      for (std::size_t u = t; u < out.samples.size(); ++u) {
        out.samples[u] = out.samples[t - 1];
        out.samples[u].t = u;
      }
      break;
    }
    out.samples[t] = *s;
  }
  out.samples[0] = DisplacementSample{};
  out.setup_ops = tracker.setup_ops();
  out.recentre_ops = tracker.recentre_ops();
  return out;
}

inline DisplacementSignal track_block(const FrameSequence& video, const Rect& block, const TrackOptions& options,
                                      std::size_t block_id = 0) {
  NullCounter none;
  return track_block(video, block, options, block_id, none);
}

// Patch-stream form: the reference and each frame are equally sized patches
// holding the block plus `options.margin` pixels on every side.
inline DisplacementSignal track_patches(const Patch<std::uint16_t>& reference, std::span<const Patch<std::uint16_t>> frames,
                                        const TrackOptions& options) {
  const int m = options.margin;
  const int bw = reference.width - 2 * m;
  const int bh = reference.height - 2 * m;
  if (bw < 1 || bh < 1) throw validation_error("track.patch_small", "patch leaves no block inside the margin");
  NullCounter none;
  BlockTracker<NullCounter> tracker({reference.values.data(), reference.width, reference.height, reference.width}, bw, bh,
                                    options, none);
  DisplacementSignal out;
  out.samples.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.width != reference.width || f.height != reference.height)
      throw validation_error("track.patch_size", "frame patch size differs from the reference");
    auto s = out.lost ? std::nullopt : tracker.step({f.values.data(), f.width, f.height, f.width}, t);
    if (!s) {
      if (!out.lost) {
        out.lost = true;
        out.lost_from = t;
      }
      DisplacementSample pad = out.samples.empty() ? DisplacementSample{} : out.samples.back();
      pad.t = t;
      out.samples.push_back(pad);
      continue;
    }
    out.samples.push_back(*s);
  }
  return out;
}

}  // namespace vmic::motion
