#pragma once

// Throughput, operation-count and scaling measurements of the extraction
// kernel. Timing covers block tracking only (no decode, no audio encode).

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "vmic/blocks.hpp"
#include "vmic/dsp.hpp"
#include "vmic/motion.hpp"
#include "vmic/video_io.hpp"

namespace vmic::bench {

template <typename Fn>
double median_seconds(int repeats, Fn&& fn) {
  std::vector<double> times;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return dsp::median(times);
}

struct ScalingFit {
  double exponent = 0.0;
  double residual = 0.0;  // RMS of log-time residuals
};

// Least-squares slope of log(time) against log(size).
inline ScalingFit fit_scaling(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw validation_error("bench.scaling", "need at least two scaling points");
  double mx = 0.0, my = 0.0;
  for (const auto& [n, t] : points) {
    mx += std::log(n);
    my += std::log(t);
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [n, t] : points) {
    sxy += (std::log(n) - mx) * (std::log(t) - my);
    sxx += (std::log(n) - mx) * (std::log(n) - mx);
  }
  ScalingFit fit;
  fit.exponent = sxx > 0.0 ? sxy / sxx : 0.0;
  double r2 = 0.0;
  for (const auto& [n, t] : points) {
    const double r = std::log(t) - (my + fit.exponent * (std::log(n) - mx));
    r2 += r * r;
  }
  fit.residual = std::sqrt(r2 / static_cast<double>(points.size()));
  return fit;
}

struct BenchConfig {
  motion::TrackOptions track;
  int block_size = 8;
  double top_fraction = 0.1;
  int repeats = 5;
  std::vector<int> workers{1};
};

struct Row {
  std::string workload;  // "full" or "pruned"
  int workers = 1;
  std::uint64_t pixels_processed = 0;
  double wall_time = 0.0;
  double throughput = 0.0;  // pixels per second
};

struct BenchReport {
  std::vector<Row> rows;
  // Per tracked pixel: the one profile per frame, extra profiles after a
  // recentre, and the one-off reference calibration amortized.
  double ops_per_pixel = 0.0;
  double recentre_ops_per_pixel = 0.0;
  double setup_ops_per_pixel = 0.0;
  double total_ops_per_pixel() const { return ops_per_pixel + recentre_ops_per_pixel + setup_ops_per_pixel; }
  std::vector<std::pair<double, double>> scaling;  // (pixels, seconds)
  ScalingFit scaling_fit;
  double pruned_speedup = 0.0;  // full / pruned time at one worker
  std::optional<double> fixed_vs_float_rms;
  std::size_t blocks_total = 0;
  std::size_t blocks_selected = 0;
};

inline std::uint64_t workload_pixels(const FrameSequence& video, const blocks::BlockGrid& grid,
                                     const std::vector<std::size_t>& ids) {
  std::uint64_t area = 0;
  for (auto id : ids) {
    const auto& r = grid.find(id).rect;
    area += static_cast<std::uint64_t>(r.width) * static_cast<std::uint64_t>(r.height);
  }
  return area * video.frame_count();
}

// RMS difference between fixed-point and float displacement over every
// block of an 8-bit video.
inline double fixed_float_deviation(const FrameSequence& video, const blocks::BlockGrid& grid, motion::TrackOptions track) {
  track.mode.arithmetic = motion::Arithmetic::float64;
  const auto a = blocks::extract_all_blocks(video, grid, {track, 1});
  track.mode.arithmetic = motion::Arithmetic::fixed16;
  const auto b = blocks::extract_all_blocks(video, grid, {track, 1});
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& [id, blk] : a) {
    const auto& x = blk.displacement.samples;
    const auto& y = b.at(id).displacement.samples;
    for (std::size_t t = 0; t < x.size(); ++t) {
      s += (x[t].dx - y[t].dx) * (x[t].dx - y[t].dx) + (x[t].dy - y[t].dy) * (x[t].dy - y[t].dy);
      ++n;
    }
  }
  return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

inline BenchReport run_throughput(const FrameSequence& video, const BenchConfig& config) {
  const auto grid = blocks::make_grid(video.width(), video.height(), config.block_size, config.track.margin);
  BenchReport report;
  std::vector<std::size_t> all;
  for (const auto& b : grid.blocks) all.push_back(b.id);

  std::uint64_t ops = 0;
  const auto extracted = blocks::extract_all_blocks(video, grid, {config.track, 1}, nullptr, &ops);
  // Frame 0 is the reference; frames 1.. are the tracked ones.
  const auto frames = static_cast<double>(video.frame_count());
  const double pixels = static_cast<double>(workload_pixels(video, grid, all)) * std::max(frames - 1.0, 1.0) / frames;
  report.ops_per_pixel = static_cast<double>(ops) / pixels;
  std::uint64_t setup = 0, recentre = 0;
  for (const auto& [id, blk] : extracted) {
    setup += blk.displacement.setup_ops;
    recentre += blk.displacement.recentre_ops;
  }
  report.setup_ops_per_pixel = static_cast<double>(setup) / pixels;
  report.recentre_ops_per_pixel = static_cast<double>(recentre) / pixels;

  const auto window = std::min(dsp::default_window(video.fps()), blocks::calibration_window(video.frame_count(), video.fps()));
  const auto map = blocks::select_blocks(blocks::score_all(extracted, blocks::default_scorer(window)),
                                         blocks::SelectionRule::top(config.top_fraction));
  std::vector<std::size_t> pruned = map.selected;
  std::sort(pruned.begin(), pruned.end());
  report.blocks_total = all.size();
  report.blocks_selected = pruned.size();

  auto time_subset = [&](const std::vector<std::size_t>& ids, int workers) {
    return median_seconds(config.repeats, [&] { (void)blocks::extract_all_blocks(video, grid, {config.track, workers}, &ids); });
  };
  for (int w : config.workers) {
    for (const auto* name : {"full", "pruned"}) {
      const auto& ids = std::string(name) == "full" ? all : pruned;
      if (ids.empty()) continue;
      Row row{name, w, workload_pixels(video, grid, ids), time_subset(ids, w), 0.0};
      row.throughput = static_cast<double>(row.pixels_processed) / row.wall_time;
      report.rows.push_back(row);
    }
  }
  double full1 = 0.0, pruned1 = 0.0;
  for (const auto& r : report.rows)
    if (r.workers == config.workers.front()) (r.workload == "full" ? full1 : pruned1) = r.wall_time;
  if (pruned1 > 0.0) report.pruned_speedup = full1 / pruned1;

  // Leading quarter, half and all of the grid, like a growing frame. Rounds
  // are interleaved and the fastest run of each subset kept; a stall then
  // hits one sample, not one subset.
  std::vector<std::vector<std::size_t>> subsets;
  for (std::size_t div : {4u, 2u, 1u})
    subsets.emplace_back(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, all.size() / div)));
  std::vector<double> best(subsets.size(), std::numeric_limits<double>::infinity());
  for (int round = 0; round < std::max(3, 2 * config.repeats); ++round)
    for (std::size_t s = 0; s < subsets.size(); ++s)
      best[s] = std::min(best[s], median_seconds(1, [&] {
                           (void)blocks::extract_all_blocks(video, grid, {config.track, 1}, &subsets[s]);
                         }));
  for (std::size_t s = 0; s < subsets.size(); ++s)
    report.scaling.push_back({static_cast<double>(workload_pixels(video, grid, subsets[s])), best[s]});
  report.scaling_fit = fit_scaling(report.scaling);
  if (video.bit_depth() == 8) report.fixed_vs_float_rms = fixed_float_deviation(video, grid, config.track);
  return report;
}

// ---------------------------------------------------------------------------
// Real-time check.

struct RealtimeConfig {
  motion::TrackOptions track;
  int block_size = 8;
  double top_fraction = 0.1;
  std::size_t sample_frames = 256;
  std::size_t max_sample_blocks = 64;
  int workers = 1;
  int repeats = 3;
  std::uint64_t seed = 1;
};

struct RealtimeResult {
  bool pass = false;
  bool degenerate = false;  // no blocks selected
  bool extrapolated = false;
  double frame_rate = 0.0;
  double achieved_rate = 0.0;  // frames per second on the pruned workload
  double margin = 0.0;         // achieved / required
  std::size_t blocks_total = 0;
  std::size_t blocks_selected = 0;
};

// Synthetic 8-bit workload: a static random texture with per-frame noise,
// large enough to hold the sampled blocks.
inline FrameSequence realtime_workload(int width, int height, std::size_t frames, double fps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tex(40, 215);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t area = static_cast<std::size_t>(width) * height;
  std::vector<std::uint16_t> base(area);
  for (auto& v : base) v = static_cast<std::uint16_t>(tex(rng));
  std::vector<std::uint16_t> px(area * frames);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < area; ++i)
      px[t * area + i] = static_cast<std::uint16_t>(std::clamp(std::lround(base[i] + noise(rng)), 0L, 255L));
  const auto num = static_cast<std::uint32_t>(std::lround(fps));
  return FrameSequence(width, height, {std::max<std::uint32_t>(1, num), 1}, 8, std::move(px));
}

// Pass iff the pruned workload sustains `frame_rate`. Large workloads are
// timed on a sample of blocks and scaled linearly to the full block count.
inline RealtimeResult realtime_check(double frame_rate, int width, int height, const RealtimeConfig& config) {
  if (!(frame_rate > 0.0)) throw validation_error("realtime.rate", "frame rate must be positive");
  const int m = config.track.margin;
  const int bs = config.block_size;
  RealtimeResult r;
  r.frame_rate = frame_rate;
  r.blocks_total = static_cast<std::size_t>(std::max(0, (width - 2 * m) / bs)) * static_cast<std::size_t>(std::max(0, (height - 2 * m) / bs));
  if (r.blocks_total == 0) throw validation_error("grid.empty", "frame too small for a single block plus margin");
  if (config.top_fraction > 0.0)
    r.blocks_selected = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.top_fraction * static_cast<double>(r.blocks_total))),
                                                1, r.blocks_total);
  if (r.blocks_selected == 0) {
    r.pass = true;
    r.degenerate = true;
    return r;
  }
  const std::size_t k = std::min(r.blocks_selected, config.max_sample_blocks);
  r.extrapolated = k < r.blocks_selected;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
  const int rows = static_cast<int>((k + cols - 1) / cols);
  const auto video = realtime_workload(cols * bs + 2 * m, rows * bs + 2 * m, config.sample_frames, frame_rate, config.seed);
  const auto grid = blocks::make_grid(video.width(), video.height(), bs, m);
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(grid.blocks[i].id);
  const double seconds = median_seconds(config.repeats, [&] {
    (void)blocks::extract_all_blocks(video, grid, {config.track, config.workers}, &ids);
  });
  const double per_frame = seconds / static_cast<double>(config.sample_frames) *
                           (static_cast<double>(r.blocks_selected) / static_cast<double>(k));
  r.achieved_rate = per_frame > 0.0 ? 1.0 / per_frame : std::numeric_limits<double>::max();
  r.margin = r.achieved_rate / frame_rate;
  r.pass = r.achieved_rate >= frame_rate;
  return r;
}

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"workload", row.workload},
                    {"workers", row.workers},
                    {"pixels_processed", row.pixels_processed},
                    {"wall_time", row.wall_time},
                    {"throughput", row.throughput}});
  nlohmann::json scaling = nlohmann::json::array();
  for (const auto& [n, t] : r.scaling) scaling.push_back({{"pixels", n}, {"seconds", t}});
  nlohmann::json j{{"rows", rows},
                   {"ops_per_pixel", r.ops_per_pixel},
                   {"recentre_ops_per_pixel", r.recentre_ops_per_pixel},
                   {"setup_ops_per_pixel", r.setup_ops_per_pixel},
                   {"total_ops_per_pixel", r.total_ops_per_pixel()},
                   {"scaling", scaling},
                   {"scaling_exponent", r.scaling_fit.exponent},
                   {"scaling_residual", r.scaling_fit.residual},
                   {"pruned_speedup", r.pruned_speedup},
                   {"blocks_total", r.blocks_total},
                   {"blocks_selected", r.blocks_selected}};
  j["fixed_vs_float_rms_px"] = r.fixed_vs_float_rms ? nlohmann::json(*r.fixed_vs_float_rms) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const RealtimeResult& r) {
  return {{"pass", r.pass},
          {"degenerate", r.degenerate},
          {"extrapolated", r.extrapolated},
          {"frame_rate", r.frame_rate},
          {"achieved_rate", r.achieved_rate},
          {"margin", r.margin},
          {"blocks_total", r.blocks_total},
          {"blocks_selected", r.blocks_selected}};
}

}  // namespace vmic::bench
