#pragma once

// Block partitioning, per-block tracking, sound-quality scoring, pruning,
// and the few-pixel mask mode.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmic/aggregation.hpp"
#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/motion.hpp"
#include "vmic/parallel.hpp"
#include "vmic/synth.hpp"
#include "vmic/video_io.hpp"

namespace vmic::blocks {

struct Block {
  std::size_t id = 0;
  Rect rect;
  Vec2 center;
};

struct BlockGrid {
  int block_size = 8;
  int origin_x = 0;
  int origin_y = 0;
  std::vector<Block> blocks;

  const Block& find(std::size_t id) const {
    for (const auto& b : blocks)
      if (b.id == id) return b;
    throw validation_error("grid.block_id", "unknown block id " + std::to_string(id));
  }
};

// Tiles the frame interior (leaving `margin` pixels for the tracker's search
// on every side) with square blocks. Partial blocks at the far edges are
// dropped. Ids run row-major from 0.
inline BlockGrid make_grid(int width, int height, int block_size = 8, int margin = 4) {
  if (block_size < 2) throw validation_error("grid.block_size", "block size must be at least 2");
  if (margin < 0) throw validation_error("grid.margin", "margin must be non-negative");
  BlockGrid grid{block_size, margin, margin, {}};
  std::size_t id = 0;
  for (int y = margin; y + block_size + margin <= height; y += block_size)
    for (int x = margin; x + block_size + margin <= width; x += block_size) {
      const Rect r{x, y, block_size, block_size};
      grid.blocks.push_back({id++, r, r.center()});
    }
  if (grid.blocks.empty()) throw validation_error("grid.empty", "frame too small for a single block plus margin");
  return grid;
}

// A grid over caller-chosen rectangles (ids in the given order).
inline BlockGrid grid_from_rects(std::span<const Rect> rects) {
  BlockGrid grid;
  if (!rects.empty()) grid.block_size = rects.front().width;
  for (std::size_t i = 0; i < rects.size(); ++i) grid.blocks.push_back({i, rects[i], rects[i].center()});
  return grid;
}

// ---------------------------------------------------------------------------
// Extraction.

struct ExtractedBlock {
  motion::DisplacementSignal displacement;  // raw tracker output
  AudioSignal audio;                        // scalar, mean-removed and linearly detrended
};

struct ExtractOptions {
  motion::TrackOptions track;
  int workers = 1;
};

inline AudioSignal block_audio(const motion::DisplacementSignal& signal, double sample_rate, motion::Dimensionality dims) {
  AudioSignal a = dims == motion::Dimensionality::two_d ? project_axis(signal, sample_rate)
                                                        : AudioSignal{sample_rate, signal.dx()};
  a.samples = dsp::detrend_linear(a.samples);
  return a;
}

namespace detail {

inline std::vector<const Block*> pick(const BlockGrid& grid, const std::vector<std::size_t>* subset) {
  std::vector<const Block*> out;
  if (!subset) {
    for (const auto& b : grid.blocks) out.push_back(&b);
  } else {
    for (std::size_t id : *subset) out.push_back(&grid.find(id));
  }
  return out;
}

}  // namespace detail

// Tracks every block (or only `subset`). Each block is computed sequentially
// on one worker, so results do not depend on the worker count. A block that
// loses track keeps its lost flag; the run continues. When `ops` is given,
// it receives the total instrumented operation count.
inline std::map<std::size_t, ExtractedBlock> extract_all_blocks(const FrameSequence& video, const BlockGrid& grid,
                                                                const ExtractOptions& options,
                                                                const std::vector<std::size_t>* subset = nullptr,
                                                                std::uint64_t* ops = nullptr) {
  const auto chosen = detail::pick(grid, subset);
  std::vector<ExtractedBlock> results(chosen.size());
  std::vector<std::uint64_t> counts(chosen.size(), 0);
  parallel_for(chosen.size(), options.workers, [&](std::size_t i) {
    const Block& b = *chosen[i];
    motion::DisplacementSignal d;
    if (ops) {
      motion::OpCounter counter;
      d = motion::track_block(video, b.rect, options.track, b.id, counter);
      counts[i] = counter.ops;
    } else {
      d = motion::track_block(video, b.rect, options.track, b.id);
    }
    results[i].audio = block_audio(d, video.fps(), options.track.mode.dimensionality);
    results[i].displacement = std::move(d);
  });
  std::map<std::size_t, ExtractedBlock> out;
  for (std::size_t i = 0; i < chosen.size(); ++i) out.emplace(chosen[i]->id, std::move(results[i]));
  if (ops) {
    *ops = 0;
    for (auto c : counts) *ops += c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring.

inline constexpr double kScoreFloor = -100.0;

// Upper edge of the scoring band: 4 kHz, or 0.45 fs for slow cameras.
inline double score_band_high(double sample_rate) { return std::min(4000.0, 0.45 * sample_rate); }

// Mean over STFT frames of the 85 Hz..4 kHz band energy relative to a noise
// floor (band median of each bin's 10th-percentile magnitude over time), in
// dB. Invariant to signal gain. An all-zero signal scores kScoreFloor.
inline double score_block(std::span<const double> samples, double sample_rate, std::size_t window = 0) {
  if (window == 0) window = dsp::default_window(sample_rate);
  if (samples.size() < 2 * window)
    throw validation_error("score.length", "signal shorter than two STFT windows");
  const auto s = dsp::stft(samples, {window, 0});
  const double hi = score_band_high(sample_rate);
  std::vector<std::size_t> band;
  for (std::size_t k = 0; k < s.bins(); ++k) {
    const double f = s.bin_frequency(k, sample_rate);
    if (f >= 85.0 && f <= hi) band.push_back(k);
  }
  if (band.empty()) throw validation_error("score.band", "sample rate too low for the scoring band");

  double peak = 0.0;
  for (std::size_t m = 0; m < s.frames(); ++m)
    for (std::size_t k = 0; k < s.bins(); ++k) peak = std::max(peak, std::abs(s.at(m, k)));
  if (!(peak > 0.0)) return kScoreFloor;

  const auto per_bin = dsp::bin_percentile(s, 10.0);
  std::vector<double> band_floor;
  for (std::size_t k : band) band_floor.push_back(per_bin[k]);
  const double floor = std::max(dsp::median(band_floor), 1e-9 * peak);
  const double denom = static_cast<double>(band.size()) * floor * floor;

  auto [first, last] = dsp::full_frame_range(s);
  double total = 0.0;
  for (std::size_t m = first; m <= last; ++m) {
    double e = 0.0;
    for (std::size_t k : band) e += std::norm(s.at(m, k));
    total += e > 0.0 ? std::max(10.0 * std::log10(e / denom), kScoreFloor) : kScoreFloor;
  }
  return total / static_cast<double>(last - first + 1);
}

// Pluggable scorer: (samples, sample_rate) -> score, higher is better.
using Scorer = std::function<double(std::span<const double>, double)>;

inline Scorer default_scorer(std::size_t window = 0) {
  return [window](std::span<const double> x, double fs) { return score_block(x, fs, window); };
}

inline std::map<std::size_t, double> score_all(const std::map<std::size_t, ExtractedBlock>& blocks, const Scorer& scorer,
                                               int workers = 1) {
  std::vector<const std::pair<const std::size_t, ExtractedBlock>*> items;
  for (const auto& kv : blocks) items.push_back(&kv);
  std::vector<double> scores(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& b = items[i]->second;
    // A lost block's padded tail is a step, which would look like signal.
    scores[i] = b.displacement.lost ? kScoreFloor : scorer(b.audio.samples, b.audio.sample_rate);
  });
  std::map<std::size_t, double> out;
  for (std::size_t i = 0; i < items.size(); ++i) out.emplace(items[i]->first, scores[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Selection.

struct SelectionRule {
  enum class Kind { top_fraction, threshold } kind = Kind::top_fraction;
  double value = 0.1;

  static SelectionRule top(double fraction) { return {Kind::top_fraction, fraction}; }
  static SelectionRule above(double threshold) { return {Kind::threshold, threshold}; }
};

struct BlockScoreMap {
  std::map<std::size_t, double> scores;
  std::vector<std::size_t> selected;  // descending score, ties by ascending id
  SelectionRule rule;

  bool is_selected(std::size_t id) const { return std::find(selected.begin(), selected.end(), id) != selected.end(); }
};

// Top fraction keeps round(fraction * N) blocks, at least one unless the
// fraction is exactly zero. A threshold that admits nothing falls back to
// the single best block.
inline BlockScoreMap select_blocks(std::map<std::size_t, double> scores, const SelectionRule& rule = {}) {
  if (scores.empty()) throw validation_error("select.empty", "no scored blocks to select from");
  std::vector<std::size_t> order;
  for (const auto& [id, s] : scores) order.push_back(id);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores.at(a), sb = scores.at(b);
    return sa != sb ? sa > sb : a < b;
  });
  BlockScoreMap out{std::move(scores), {}, rule};
  if (rule.kind == SelectionRule::Kind::top_fraction) {
    if (!(rule.value >= 0.0 && rule.value <= 1.0))
      throw validation_error("select.fraction", "top_fraction must lie in [0, 1]");
    std::size_t n = 0;
    if (rule.value > 0.0)
      n = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(rule.value * static_cast<double>(order.size()))), 1,
                                  order.size());
    out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    for (std::size_t id : order)
      if (out.scores.at(id) >= rule.value) out.selected.push_back(id);
    if (out.selected.empty()) out.selected.push_back(order.front());
  }
  return out;
}

// Selected blocks' audio paired with their scores, in selection order.
inline std::vector<ScoredSignal> selected_signals(const std::map<std::size_t, ExtractedBlock>& blocks,
                                                  const BlockScoreMap& map) {
  std::vector<ScoredSignal> out;
  for (std::size_t id : map.selected) out.push_back({blocks.at(id).audio, map.scores.at(id)});
  return out;
}

inline void write_score_csv(const std::filesystem::path& path, const BlockGrid& grid, const BlockScoreMap& map,
                            std::span<const std::string> header_comments = {}) {
  std::ofstream out(path);
  if (!out) throw data_error("csv.write", "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << "block_id,x,y,score,selected\n";
  out.precision(10);
  for (const auto& b : grid.blocks) {
    auto it = map.scores.find(b.id);
    if (it == map.scores.end()) continue;
    out << b.id << ',' << b.center.x << ',' << b.center.y << ',' << it->second << ',' << (map.is_selected(b.id) ? 1 : 0)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Few-pixel mask.

struct MaskPixel {
  int x = 0;
  int y = 0;
  double weight = 0.0;
  int polarity = 1;  // sign of the pixel's correlation with the best pixel
  double score = 0.0;
};

struct PixelMask {
  std::vector<MaskPixel> pixels;
  std::size_t first_frame = 0;
  std::size_t frame_count = 0;  // calibration segment [first, first + count)
};

inline std::size_t default_calibration_frames(std::size_t frames) { return std::max<std::size_t>(frames / 10, 2); }

// Analysis window for a calibration segment: the regular default, shrunk to
// the largest power of two that still gives two windows of data.
inline std::size_t calibration_window(std::size_t frames, double sample_rate) {
  std::size_t w = dsp::default_window(sample_rate);
  while (w > 16 && 2 * w > frames) w /= 2;
  if (2 * w > frames) throw validation_error("mask.calibration", "calibration segment shorter than 32 frames");
  return w;
}

namespace detail {

inline std::vector<double> pixel_series(const FrameSequence& video, int x, int y, std::size_t first, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t t = 0; t < count; ++t) out[t] = video.at(first + t, x, y);
  return out;
}

}  // namespace detail

// Scores each pixel's intensity series over the calibration prefix and keeps
// the top_n. Pixels can move in opposite intensity directions for the same
// motion, so each carries a polarity that aligns it with the best pixel;
// without it a weighted mean of pixel intensities would cancel.
inline PixelMask build_pixel_mask(const FrameSequence& video, std::size_t calibration_frames, std::size_t top_n,
                                  const Scorer& scorer = {}, int workers = 1) {
  const std::size_t pixels = video.frame_area();
  if (top_n == 0 || top_n > pixels) throw validation_error("mask.top_n", "top_n must lie in [1, pixel count]");
  if (calibration_frames == 0) calibration_frames = default_calibration_frames(video.frame_count());
  if (calibration_frames > video.frame_count())
    throw validation_error("mask.calibration", "calibration segment longer than the video");
  const double fs = video.fps();
  const Scorer score = scorer ? scorer : default_scorer(calibration_window(calibration_frames, fs));

  std::vector<double> scores(pixels);
  parallel_for(pixels, workers, [&](std::size_t i) {
    const int x = static_cast<int>(i % static_cast<std::size_t>(video.width()));
    const int y = static_cast<int>(i / static_cast<std::size_t>(video.width()));
    const auto series = dsp::detrend_linear(detail::pixel_series(video, x, y, 0, calibration_frames));
    scores[i] = score(series, fs);
  });
  std::vector<std::size_t> order(pixels);
  for (std::size_t i = 0; i < pixels; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  order.resize(top_n);

  const double median_score = dsp::median(scores);
  std::vector<double> raw;
  for (std::size_t i : order) raw.push_back(scores[i] - median_score);
  const auto weights = weights_from_scores(raw);

  PixelMask mask{{}, 0, calibration_frames};
  const auto px = [&](std::size_t i) {
    return std::pair{static_cast<int>(i % static_cast<std::size_t>(video.width())),
                     static_cast<int>(i / static_cast<std::size_t>(video.width()))};
  };
  const auto [bx, by] = px(order.front());
  const auto best = dsp::detrend_linear(detail::pixel_series(video, bx, by, 0, calibration_frames));
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto [x, y] = px(order[j]);
    const auto series = dsp::detrend_linear(detail::pixel_series(video, x, y, 0, calibration_frames));
    const int polarity = j == 0 || dsp::pearson(best, series) >= 0.0 ? 1 : -1;
    mask.pixels.push_back({x, y, weights[j], polarity, scores[order[j]]});
  }
  return mask;
}

// Per frame: sum of weight * polarity * intensity over the mask, mean removed.
inline AudioSignal mask_signal(const FrameSequence& video, const PixelMask& mask) {
  for (const auto& p : mask.pixels)
    if (p.x < 0 || p.y < 0 || p.x >= video.width() || p.y >= video.height())
      throw validation_error("mask.bounds", "mask pixel outside the frame");
  AudioSignal out{video.fps(), std::vector<double>(video.frame_count(), 0.0)};
  for (std::size_t t = 0; t < video.frame_count(); ++t)
    for (const auto& p : mask.pixels) out.samples[t] += p.weight * p.polarity * video.at(t, p.x, p.y);
  out.samples = dsp::remove_mean(out.samples);
  return out;
}

inline void write_mask_csv(const std::filesystem::path& path, const PixelMask& mask,
                           std::span<const std::string> header_comments = {}) {
  std::ofstream out(path);
  if (!out) throw data_error("csv.write", "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << "x,y,weight,polarity\n";
  out.precision(12);
  for (const auto& p : mask.pixels) out << p.x << ',' << p.y << ',' << p.weight << ',' << p.polarity << '\n';
}

}  // namespace vmic::blocks
