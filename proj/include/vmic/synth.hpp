#pragma once

// Synthetic high-speed video with exactly known sub-pixel motion. Each
// moving region shows the base texture displaced by its own displacement
// series, resampled with a bicubic kernel; sensor noise and an optional
// global flicker are applied afterwards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vmic/error.hpp"
#include "vmic/parallel.hpp"
#include "vmic/video_io.hpp"

namespace vmic {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  friend Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }
  friend Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  int right() const { return x + width; }
  int bottom() const { return y + height; }
  Vec2 center() const { return {x + 0.5 * (width - 1), y + 0.5 * (height - 1)}; }
  bool contains(int px, int py) const { return px >= x && px < right() && py >= y && py < bottom(); }
  bool intersects(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

namespace synth {

struct Tone {
  double frequency_hz = 0.0;
  double amplitude_x = 0.0;  // pixels
  double amplitude_y = 0.0;
  double phase = 0.0;  // radians
};

// Continuous-time displacement description; t is measured in frames and may
// be fractional, so delayed copies are exact rather than interpolated.
struct MotionSeries {
  std::vector<Tone> tones;
  double decay_per_second = 0.0;  // exponential envelope exp(-decay * t / fs) on the tones
  Vec2 drift_per_frame{};         // linear ramp
  std::vector<Vec2> samples;      // optional explicit per-frame samples, Catmull-Rom interpolated

  Vec2 at(double t, double fs) const {
    Vec2 d = t * drift_per_frame;
    if (!tones.empty()) {
      const double envelope = decay_per_second > 0.0 ? std::exp(-decay_per_second * t / fs) : 1.0;
      for (const Tone& tone : tones) {
        const double s = std::sin(2.0 * std::numbers::pi * tone.frequency_hz * t / fs + tone.phase) * envelope;
        d.x += tone.amplitude_x * s;
        d.y += tone.amplitude_y * s;
      }
    }
    if (!samples.empty()) d = d + sample_at(t);
    return d;
  }

 private:
  Vec2 sample_at(double t) const {
    const auto n = static_cast<long>(samples.size());
    auto get = [&](long i) { return samples[static_cast<std::size_t>(std::clamp(i, 0L, n - 1))]; };
    const double fl = std::floor(t);
    const auto i = static_cast<long>(fl);
    const double u = t - fl;
    if (u == 0.0) return get(i);
    const Vec2 p0 = get(i - 1), p1 = get(i), p2 = get(i + 1), p3 = get(i + 2);
    auto cr = [u](double a, double b, double c, double d) {
      return 0.5 * ((2.0 * b) + (-a + c) * u + (2.0 * a - 5.0 * b + 4.0 * c - d) * u * u +
                    (-a + 3.0 * b - 3.0 * c + d) * u * u * u);
    };
    return {cr(p0.x, p1.x, p2.x, p3.x), cr(p0.y, p1.y, p2.y, p3.y)};
  }
};

// A horizontal sinusoid, the workhorse of most oracles.
inline MotionSeries sine_x(double frequency_hz, double amplitude_px, double phase = 0.0) {
  MotionSeries m;
  m.tones.push_back({frequency_hz, amplitude_px, 0.0, phase});
  return m;
}

// Band-limited random carrier: `count` tones with random frequencies in
// [low_hz, high_hz] and random phases, scaled so the horizontal RMS equals
// `rms_px`. Deterministic in `seed`.
inline MotionSeries random_carrier(std::uint64_t seed, int count, double low_hz, double high_hz, double rms_px,
                                   Vec2 axis = {1.0, 0.0}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(low_hz, high_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  MotionSeries out;
  double power = 0.0;
  std::vector<double> amps;
  for (int i = 0; i < count; ++i) {
    const double a = amp(rng);
    amps.push_back(a);
    power += 0.5 * a * a;
    out.tones.push_back({freq(rng), a, 0.0, phase(rng)});
  }
  const double scale = power > 0.0 ? rms_px / std::sqrt(power) : 0.0;
  const double axis_norm = axis.norm();
  for (std::size_t i = 0; i < out.tones.size(); ++i) {
    out.tones[i].amplitude_x = amps[i] * scale * axis.x / axis_norm;
    out.tones[i].amplitude_y = amps[i] * scale * axis.y / axis_norm;
  }
  return out;
}

struct MotionTrack {
  Rect region;
  MotionSeries series;
  double delay = 0.0;  // frames
};

enum class TextureKind { noise, edge, flat };

struct TextureSpec {
  TextureKind kind = TextureKind::noise;
  double mean = 128.0;      // in 8-bit intensity units; scaled for 16-bit output
  double contrast = 40.0;   // standard deviation for noise, step height for edge
  double smoothing = 1.5;   // Gaussian sigma in pixels
  double edge_x = 0.0;      // edge kind: step location (vertical edge)
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  Rational frame_rate{2200, 1};
  double duration = 1.0;  // seconds
  int bit_depth = 8;
  TextureSpec texture;
  std::vector<MotionTrack> motion;
  double noise_sigma = 0.0;           // additive Gaussian noise, 8-bit intensity units
  std::vector<double> flicker;        // optional per-frame global gain
  double max_displacement = 2.0;      // pixels

  std::size_t frame_count() const {
    return static_cast<std::size_t>(std::llround(duration * frame_rate.value()));
  }
};

inline void validate(const SceneSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) throw validation_error("scene.size", "scene dimensions must be positive");
  if (spec.frame_rate.num == 0 || spec.frame_rate.den == 0)
    throw validation_error("scene.rate", "frame rate must be positive");
  if (spec.frame_count() < 2) throw validation_error("scene.duration", "scene must span at least two frames");
  if (spec.bit_depth != 8 && spec.bit_depth != 16) throw validation_error("scene.bit_depth", "bit depth must be 8 or 16");
  if (spec.noise_sigma < 0.0) throw validation_error("scene.noise", "noise_sigma must be non-negative");
  if (!(spec.max_displacement > 0.0) || spec.max_displacement > 6.0)
    throw validation_error("scene.max_displacement", "max_displacement must be in (0, 6] pixels");
  if (!spec.flicker.empty() && spec.flicker.size() < spec.frame_count())
    throw validation_error("scene.flicker", "flicker series shorter than the scene");
  const double fs = spec.frame_rate.value();
  for (std::size_t i = 0; i < spec.motion.size(); ++i) {
    const auto& track = spec.motion[i];
    const Rect& r = track.region;
    if (r.width <= 0 || r.height <= 0 || r.x < 0 || r.y < 0 || r.right() > spec.width || r.bottom() > spec.height)
      throw validation_error("scene.region_bounds", "motion region " + std::to_string(i) + " lies outside the frame");
    if (track.delay < 0.0) throw validation_error("scene.delay", "motion delay must be non-negative");
    for (std::size_t j = 0; j < i; ++j)
      if (spec.motion[j].region.intersects(r))
        throw validation_error("scene.overlap", "motion regions " + std::to_string(j) + " and " + std::to_string(i) +
                                                    " overlap");
    for (std::size_t t = 0; t < spec.frame_count(); ++t) {
      const Vec2 d = track.series.at(static_cast<double>(t) - track.delay, fs);
      if (std::abs(d.x) > spec.max_displacement || std::abs(d.y) > spec.max_displacement)
        throw validation_error("scene.amplitude", "motion region " + std::to_string(i) + " exceeds max_displacement at frame " +
                                                      std::to_string(t));
    }
  }
}

// Base intensity grid with a margin so displaced samples stay inside it.
// The grid is stored at kOversample points per pixel: bicubic resampling of
// a grid that is smooth at its own spacing is a near-exact sub-pixel shift,
// while the texture keeps its full detail at the pixel scale.
class Texture {
 public:
  static constexpr int kPad = 8;
  static constexpr int kOversample = 4;

  Texture(const TextureSpec& spec, int width, int height, std::uint64_t seed)
      : width_((width + 2 * kPad) * kOversample), height_((height + 2 * kPad) * kOversample),
        values_(static_cast<std::size_t>(width_) * height_) {
    switch (spec.kind) {
      case TextureKind::flat:
        std::fill(values_.begin(), values_.end(), spec.mean);
        break;
      case TextureKind::edge:
        for (int y = 0; y < height_; ++y)
          for (int x = 0; x < width_; ++x) {
            const double px = static_cast<double>(x) / kOversample - kPad;
            const double u = (px - spec.edge_x) / (std::max(spec.smoothing, 1e-6) * std::numbers::sqrt2);
            value(x, y) = spec.mean + spec.contrast * (0.5 * std::erf(u));
          }
        break;
      case TextureKind::noise:
        make_noise(spec, seed);
        break;
    }
  }

  // Bicubic (Keys, a = -0.5) sample at real coordinates in frame space.
  double sample(double x, double y) const {
    const double gx = (x + kPad) * kOversample;
    const double gy = (y + kPad) * kOversample;
    const double fx = std::floor(gx);
    const double fy = std::floor(gy);
    double wx[4];
    double wy[4];
    keys_weights(gx - fx, wx);
    keys_weights(gy - fy, wy);
    return sample_grid(static_cast<int>(fx), static_cast<int>(fy), wx, wy);
  }

  // Grid column/row of pixel (x, y) before any shift.
  static int grid_index(int pixel) { return (pixel + kPad) * kOversample; }

  // Bicubic sample with taps at grid columns gx-1..gx+2 and rows gy-1..gy+2.
  double sample_grid(int gx, int gy, const double* wx, const double* wy) const {
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double* row = &values_[static_cast<std::size_t>(gy - 1 + j) * width_ + (gx - 1)];
      acc += wy[j] * (wx[0] * row[0] + wx[1] * row[1] + wx[2] * row[2] + wx[3] * row[3]);
    }
    return acc;
  }

  double at(int x, int y) const { return values_[static_cast<std::size_t>(grid_index(y)) * width_ + grid_index(x)]; }

  static void keys_weights(double u, double* w) {
    constexpr double a = -0.5;
    auto near = [](double t) { return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0; };
    auto far = [](double t) { return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a; };
    w[0] = far(1.0 + u);
    w[1] = near(u);
    w[2] = near(1.0 - u);
    w[3] = far(2.0 - u);
  }

 private:
  double& value(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  // White noise on the fine grid, Gaussian-smoothed (sigma given in pixels),
  // then standardised to the requested mean and contrast.
  void make_noise(const TextureSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : values_) v = normal(rng);
    const double sigma = std::max(spec.smoothing, 0.5) * kOversample;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    const double ksum = std::accumulate(kernel.begin(), kernel.end(), 0.0);
    for (double& k : kernel) k /= ksum;
    std::vector<double> tmp(values_.size());
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * values_[static_cast<std::size_t>(y) * width_ + std::clamp(x + i, 0, width_ - 1)];
        tmp[static_cast<std::size_t>(y) * width_ + x] = acc;
      }
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, height_ - 1)) * width_ + x];
        value(x, y) = acc;
      }
    double m = 0.0;
    for (double v : values_) m += v;
    m /= static_cast<double>(values_.size());
    double var = 0.0;
    for (double v : values_) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / static_cast<double>(values_.size()));
    for (double& v : values_) v = spec.mean + spec.contrast * (v - m) / sd;
  }

  int width_;
  int height_;
  std::vector<double> values_;
};

// Renders the scene. Pure in (spec, seed); per-frame noise streams are
// derived from (seed, frame index), so the worker count never changes the
// output.
inline FrameSequence render(const SceneSpec& spec, std::uint64_t seed, int workers = 1) {
  validate(spec);
  const Texture texture(spec.texture, spec.width, spec.height, seed);
  const std::size_t frames = spec.frame_count();
  const std::size_t area = static_cast<std::size_t>(spec.width) * spec.height;
  const double fs = spec.frame_rate.value();
  const double scale = spec.bit_depth == 16 ? 257.0 : 1.0;
  const double max_value = spec.bit_depth == 16 ? 65535.0 : 255.0;

  std::vector<std::int32_t> owner(area, -1);
  for (std::size_t i = 0; i < spec.motion.size(); ++i) {
    const Rect& r = spec.motion[i].region;
    for (int y = r.y; y < r.bottom(); ++y)
      for (int x = r.x; x < r.right(); ++x) owner[static_cast<std::size_t>(y) * spec.width + x] = static_cast<std::int32_t>(i);
  }

  std::vector<std::uint16_t> pixels(frames * area);
  parallel_for(frames, workers, [&](std::size_t t) {
    struct Shift {
      int ix, iy;
      double wx[4], wy[4];
    };
    std::vector<Shift> shifts(spec.motion.size());
    for (std::size_t i = 0; i < spec.motion.size(); ++i) {
      const Vec2 d = spec.motion[i].series.at(static_cast<double>(t) - spec.motion[i].delay, fs);
      // Content displaced by d shows texture at (x - d).
      const double fx = std::floor(-d.x * Texture::kOversample);
      const double fy = std::floor(-d.y * Texture::kOversample);
      shifts[i].ix = static_cast<int>(fx);
      shifts[i].iy = static_cast<int>(fy);
      Texture::keys_weights(-d.x * Texture::kOversample - fx, shifts[i].wx);
      Texture::keys_weights(-d.y * Texture::kOversample - fy, shifts[i].wy);
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
    const double gain = spec.flicker.empty() ? 1.0 : spec.flicker[t];
    std::uint16_t* out = pixels.data() + t * area;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * spec.width + x;
        double v;
        if (const auto o = owner[idx]; o >= 0) {
          const Shift& s = shifts[static_cast<std::size_t>(o)];
          v = texture.sample_grid(Texture::grid_index(x) + s.ix, Texture::grid_index(y) + s.iy, s.wx, s.wy);
        } else {
          v = texture.at(x, y);
        }
        v *= gain;
        if (spec.noise_sigma > 0.0) v += noise(rng);
        out[idx] = static_cast<std::uint16_t>(std::clamp(std::round(v * scale), 0.0, max_value));
      }
  });
  return FrameSequence(spec.width, spec.height, spec.frame_rate, spec.bit_depth, std::move(pixels));
}

// Ground-truth displacement of one track, one sample per frame.
inline std::vector<Vec2> track_truth(const SceneSpec& spec, std::size_t track) {
  const auto& m = spec.motion.at(track);
  std::vector<Vec2> out(spec.frame_count());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = m.series.at(static_cast<double>(t) - m.delay, spec.frame_rate.value());
  return out;
}

// Moves `regions` with a common carrier delayed as a plane wavefront sweeping
// the image plane along `direction`. Delays are shifted so the earliest
// region has delay 0.
inline SceneSpec plane_wave_spec(SceneSpec base, Vec2 direction, double speed_mm_per_frame, std::span<const Rect> regions,
                                 const MotionSeries& carrier, double pixel_pitch_mm) {
  if (!(speed_mm_per_frame > 0.0)) throw validation_error("plane_wave.speed", "wave speed must be positive");
  if (!(pixel_pitch_mm > 0.0)) throw validation_error("plane_wave.pitch", "pixel pitch must be positive");
  const double n = direction.norm();
  if (!(n > 0.0)) throw validation_error("plane_wave.direction", "wave direction must be non-zero");
  const Vec2 u = (1.0 / n) * direction;
  std::vector<double> delays;
  for (const Rect& r : regions) delays.push_back(r.center().dot(u) * pixel_pitch_mm / speed_mm_per_frame);
  const double offset = delays.empty() ? 0.0 : *std::min_element(delays.begin(), delays.end());
  base.motion.clear();
  for (std::size_t i = 0; i < regions.size(); ++i) base.motion.push_back({regions[i], carrier, delays[i] - offset});
  return base;
}

// ---------------------------------------------------------------------------
// JSON form of SceneSpec (documented in docs/scene_format.md).

using nlohmann::json;

inline json to_json(const MotionSeries& s) {
  json j;
  json tones = json::array();
  for (const auto& t : s.tones)
    tones.push_back({{"frequency_hz", t.frequency_hz}, {"amplitude_x", t.amplitude_x}, {"amplitude_y", t.amplitude_y},
                     {"phase", t.phase}});
  j["tones"] = tones;
  if (s.decay_per_second != 0.0) j["decay_per_second"] = s.decay_per_second;
  if (s.drift_per_frame.x != 0.0 || s.drift_per_frame.y != 0.0)
    j["drift_per_frame"] = {s.drift_per_frame.x, s.drift_per_frame.y};
  if (!s.samples.empty()) {
    json xs = json::array();
    json ys = json::array();
    for (const auto& v : s.samples) {
      xs.push_back(v.x);
      ys.push_back(v.y);
    }
    j["samples_x"] = xs;
    j["samples_y"] = ys;
  }
  return j;
}

inline MotionSeries motion_from_json(const json& j) {
  MotionSeries s;
  for (const auto& t : j.value("tones", json::array()))
    s.tones.push_back({t.at("frequency_hz").get<double>(), t.value("amplitude_x", 0.0), t.value("amplitude_y", 0.0),
                       t.value("phase", 0.0)});
  s.decay_per_second = j.value("decay_per_second", 0.0);
  if (j.contains("drift_per_frame")) s.drift_per_frame = {j["drift_per_frame"].at(0), j["drift_per_frame"].at(1)};
  if (j.contains("samples_x")) {
    const auto xs = j["samples_x"].get<std::vector<double>>();
    const auto ys = j.value("samples_y", std::vector<double>(xs.size(), 0.0));
    if (ys.size() != xs.size()) throw validation_error("scene.samples", "samples_x and samples_y differ in length");
    for (std::size_t i = 0; i < xs.size(); ++i) s.samples.push_back({xs[i], ys[i]});
  }
  return s;
}

inline json to_json(const SceneSpec& spec) {
  json motion = json::array();
  for (const auto& m : spec.motion)
    motion.push_back({{"region", {m.region.x, m.region.y, m.region.width, m.region.height}},
                      {"delay", m.delay},
                      {"series", to_json(m.series)}});
  const char* kinds[] = {"noise", "edge", "flat"};
  json j = {{"width", spec.width},
            {"height", spec.height},
            {"frame_rate", std::to_string(spec.frame_rate.num) + "/" + std::to_string(spec.frame_rate.den)},
            {"duration", spec.duration},
            {"bit_depth", spec.bit_depth},
            {"texture",
             {{"kind", kinds[static_cast<int>(spec.texture.kind)]},
              {"mean", spec.texture.mean},
              {"contrast", spec.texture.contrast},
              {"smoothing", spec.texture.smoothing},
              {"edge_x", spec.texture.edge_x}}},
            {"motion", motion},
            {"noise_sigma", spec.noise_sigma},
            {"max_displacement", spec.max_displacement}};
  if (!spec.flicker.empty()) j["flicker"] = spec.flicker;
  return j;
}

inline SceneSpec scene_from_json(const json& j) {
  try {
    SceneSpec spec;
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    const auto& rate = j.at("frame_rate");
    spec.frame_rate = rate.is_string() ? parse_rational(rate.get<std::string>())
                                       : parse_rational(std::to_string(rate.get<double>()));
    spec.duration = j.at("duration").get<double>();
    spec.bit_depth = j.value("bit_depth", 8);
    if (j.contains("texture")) {
      const auto& t = j["texture"];
      const auto kind = t.value("kind", std::string("noise"));
      if (kind == "noise") spec.texture.kind = TextureKind::noise;
      else if (kind == "edge") spec.texture.kind = TextureKind::edge;
      else if (kind == "flat") spec.texture.kind = TextureKind::flat;
      else throw validation_error("scene.texture", "unknown texture kind '" + kind + "'");
      spec.texture.mean = t.value("mean", spec.texture.mean);
      spec.texture.contrast = t.value("contrast", spec.texture.contrast);
      spec.texture.smoothing = t.value("smoothing", spec.texture.smoothing);
      spec.texture.edge_x = t.value("edge_x", spec.texture.edge_x);
    }
    for (const auto& m : j.value("motion", json::array())) {
      const auto r = m.at("region").get<std::vector<int>>();
      if (r.size() != 4) throw validation_error("scene.region", "region must be [x, y, width, height]");
      spec.motion.push_back({{r[0], r[1], r[2], r[3]}, motion_from_json(m.at("series")), m.value("delay", 0.0)});
    }
    spec.noise_sigma = j.value("noise_sigma", 0.0);
    spec.flicker = j.value("flicker", std::vector<double>{});
    spec.max_displacement = j.value("max_displacement", 2.0);
    return spec;
  } catch (const json::exception& e) {
    throw validation_error("scene.json", std::string("invalid scene document: ") + e.what());
  }
}

}  // namespace synth
}  // namespace vmic
