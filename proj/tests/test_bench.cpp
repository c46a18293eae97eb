#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <vector>

#include "vmic/bench.hpp"
#include "vmic/parallel.hpp"

using namespace vmic;
using namespace vmic::bench;

TEST(Scaling, ExactPowerLaw) {
  std::vector<std::pair<double, double>> pts;
  for (double n : {1e3, 4e3, 1.6e4}) pts.push_back({n, 2e-7 * std::pow(n, 1.1)});
  const auto f = fit_scaling(pts);
  EXPECT_NEAR(f.exponent, 1.1, 1e-12);
  EXPECT_NEAR(f.residual, 0.0, 1e-12);
  EXPECT_THROW(fit_scaling(std::span<const std::pair<double, double>>(pts.data(), 1)), Error);
}

TEST(Parallel, VisitsEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(100, 3,
                            [](std::size_t i) {
                              if (i == 37) throw validation_error("x", "boom");
                            }),
               Error);
  int calls = 0;
  parallel_for(0, 4, [&](std::size_t) { ++calls; });
  EXPECT_EQ(calls, 0);
}

TEST(Throughput, OpCountsAndReportShape) {
  synth::SceneSpec spec;
  spec.width = spec.height = 40;
  spec.frame_rate = {2000, 1};
  spec.duration = 0.15;
  spec.noise_sigma = 0.5;
  spec.motion.push_back({{0, 0, 40, 40}, synth::random_carrier(1, 8, 100.0, 600.0, 0.05), 0.0});
  const auto video = synth::render(spec, 2);

  BenchConfig cfg;
  cfg.track.mode.dimensionality = motion::Dimensionality::two_d;
  cfg.repeats = 1;
  cfg.workers = {1, 2};
  const auto r = run_throughput(video, cfg);
  EXPECT_EQ(r.blocks_total, 16u);
  EXPECT_EQ(r.blocks_selected, 2u);
  // nine lags, one multiply and one add per reference pixel
  EXPECT_NEAR(r.ops_per_pixel, 18.0, 1e-9);
  EXPECT_GE(r.recentre_ops_per_pixel, 0.0);
  EXPECT_GT(r.setup_ops_per_pixel, 0.0);
  EXPECT_NEAR(r.total_ops_per_pixel(), r.ops_per_pixel + r.recentre_ops_per_pixel + r.setup_ops_per_pixel, 1e-12);
  EXPECT_EQ(r.rows.size(), 4u);
  for (const auto& row : r.rows) {
    EXPECT_GT(row.wall_time, 0.0);
    EXPECT_NEAR(row.throughput, static_cast<double>(row.pixels_processed) / row.wall_time, 1e-6 * row.throughput);
  }
  EXPECT_EQ(r.rows[0].pixels_processed, 16u * 64u * video.frame_count());
  EXPECT_EQ(r.scaling.size(), 3u);
  ASSERT_TRUE(r.fixed_vs_float_rms.has_value());
  EXPECT_LT(*r.fixed_vs_float_rms, 1e-3);
  const auto j = to_json(r);
  EXPECT_TRUE(j.contains("total_ops_per_pixel"));
  EXPECT_EQ(j["rows"].size(), 4u);
}

TEST(Realtime, SmallWorkloadAndDegenerateSelection) {
  RealtimeConfig cfg;
  cfg.sample_frames = 64;
  cfg.repeats = 1;
  const auto r = realtime_check(100.0, 64, 64, cfg);
  EXPECT_EQ(r.blocks_total, 49u);
  EXPECT_EQ(r.blocks_selected, 5u);
  EXPECT_FALSE(r.extrapolated);
  EXPECT_TRUE(r.pass);  // 100 fps on five 8x8 blocks is easy
  EXPECT_NEAR(r.margin, r.achieved_rate / 100.0, 1e-12);

  cfg.top_fraction = 0.0;
  const auto none = realtime_check(1e6, 64, 64, cfg);
  EXPECT_TRUE(none.degenerate);
  EXPECT_TRUE(none.pass);

  cfg.top_fraction = 1.0;
  cfg.max_sample_blocks = 4;
  EXPECT_TRUE(realtime_check(100.0, 64, 64, cfg).extrapolated);
  EXPECT_THROW(realtime_check(0.0, 64, 64, cfg), Error);
  EXPECT_THROW(realtime_check(100.0, 8, 8, cfg), Error);
}

TEST(Realtime, WorkloadIsDeterministic) {
  const auto a = realtime_workload(20, 20, 4, 500.0, 3);
  const auto b = realtime_workload(20, 20, 4, 500.0, 3);
  EXPECT_EQ(a.pixels(), b.pixels());
  EXPECT_EQ(a.bit_depth(), 8);
  EXPECT_EQ(a.frame_rate(), (Rational{500, 1}));
}
