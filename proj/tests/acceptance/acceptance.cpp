// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "vmic/vmic.hpp"

using namespace vmic;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Least-squares amplitude of a sinusoid at `freq` in x.
double tone_amplitude(std::span<const double> x, double freq, double fs) {
  double s = 0.0, c = 0.0, ss = 0.0, cc = 0.0, sc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs;
    s += x[i] * std::sin(w);
    c += x[i] * std::cos(w);
    ss += std::sin(w) * std::sin(w);
    cc += std::cos(w) * std::cos(w);
    sc += std::sin(w) * std::cos(w);
  }
  Eigen::Matrix2d m;
  m << ss, sc, sc, cc;
  const Eigen::Vector2d ab = m.ldlt().solve(Eigen::Vector2d(s, c));
  return std::hypot(ab(0), ab(1));
}

std::vector<double> truth_x(const synth::SceneSpec& spec, std::size_t track) {
  std::vector<double> out;
  for (const auto& v : synth::track_truth(spec, track)) out.push_back(v.x);
  return dsp::detrend_linear(out);
}

// ---------------------------------------------------------------------------
// 1. Sub-pixel accuracy at one hundredth of a pixel.

Outcome criterion1() {
  const double fs = 2200.0, f = 440.0, amp = 0.01;
  synth::SceneSpec spec;
  spec.width = 72;
  spec.height = 72;
  spec.frame_rate = {2200, 1};
  spec.duration = 1.0;
  spec.bit_depth = 16;
  spec.motion.push_back({{0, 0, 72, 72}, synth::sine_x(f, amp), 0.0});
  const auto video = synth::render(spec, 11);
  const Rect block{4, 4, 64, 64};
  const std::size_t window = dsp::default_window(fs);
  const auto expected_bin = static_cast<std::size_t>(std::lround(f * static_cast<double>(window) / fs));

  bool pass = true;
  std::ostringstream detail;
  for (auto interp : {motion::Interpolation::quadratic, motion::Interpolation::quartic}) {
    motion::TrackOptions opt;
    opt.mode.interpolation = interp;
    const auto sig = motion::track_block(video, block, opt);
    const auto x = dsp::detrend_linear(sig.dx());
    const auto mag = dsp::mean_magnitude(dsp::stft(x, {window, 0}));
    const auto bin = static_cast<std::size_t>(std::max_element(mag.begin() + 1, mag.end()) - mag.begin());
    const double a = tone_amplitude(x, f, fs);
    const double err = std::abs(a - amp) / amp;
    const bool quartic = interp == motion::Interpolation::quartic;
    const double tol = quartic ? 0.15 : 0.25;
    pass = pass && bin == expected_bin && err <= tol;
    detail << (quartic ? "quartic" : "quadratic") << ": bin " << bin << "/" << expected_bin << ", amplitude "
           << fmt("%.5f", a) << " px (err " << fmt("%.1f%%", 100 * err) << ", tol " << fmt("%.0f%%", 100 * tol) << "); ";
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 2. Vertex formula against an independent parabola fit.

Outcome criterion2() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int n = 0;
  while (n < 1000) {
    const double fm = u(rng), f0 = u(rng), fp = u(rng);
    if (!(fm + fp - 2.0 * f0 < -1e-3)) continue;  // concave only
    ++n;
    Eigen::Matrix3d v;
    v << 1, -1, 1, 1, 0, 0, 1, 1, 1;
    const Eigen::Vector3d c = v.fullPivLu().solve(Eigen::Vector3d(fm, f0, fp));  // c0 + c1 x + c2 x^2
    const double oracle = std::clamp(-c(1) / (2.0 * c(2)), -1.0, 1.0);
    worst = std::max(worst, std::abs(motion::subpixel_quadratic(fm, f0, fp) - oracle));
  }
  return {worst <= 1e-12, fmt("1000 concave triples, max |formula - oracle| = %.3g (tol 1e-12)", worst)};
}

// ---------------------------------------------------------------------------
// 3. Aggregation versus naive averaging under random per-block phase.

std::vector<Rect> region_grid(int cols, int rows, int size, int gap) {
  std::vector<Rect> out;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.push_back({gap + c * (size + gap), gap + r * (size + gap), size, size});
  return out;
}

// 8x8 block centred in each region.
std::vector<Rect> inner_blocks(std::span<const Rect> regions, int block) {
  std::vector<Rect> out;
  for (const auto& r : regions) out.push_back({r.x + (r.width - block) / 2, r.y + (r.height - block) / 2, block, block});
  return out;
}

Outcome criterion3() {
  const double fs = 2200.0, f = 300.0;
  int wins = 0;
  std::ostringstream detail;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const auto regions = region_grid(5, 4, 16, 2);
    synth::SceneSpec spec;
    spec.width = 5 * 18 + 2;
    spec.height = 4 * 18 + 2;
    spec.frame_rate = {2200, 1};
    spec.duration = 1.0;
    spec.noise_sigma = 0.5;
    for (const auto& r : regions) spec.motion.push_back({r, synth::sine_x(f, 0.1, phase(rng)), 0.0});
    const auto video = synth::render(spec, static_cast<std::uint64_t>(seed));
    const auto rects = inner_blocks(regions, 8);
    const auto grid = blocks::grid_from_rects(rects);
    const auto extracted = blocks::extract_all_blocks(video, grid, {});
    const auto scores = blocks::score_all(extracted, blocks::default_scorer());
    const auto map = blocks::select_blocks(scores, blocks::SelectionRule::top(1.0));
    const auto signals = blocks::selected_signals(extracted, map);
    const auto params = dsp::StftParams{dsp::default_window(fs), 0};
    const auto agg = aggregate(signals, params);
    const auto naive = naive_average(signals);
    const auto truth = truth_x(spec, map.selected.front());
    const double a = metrics::segmental_snr(truth, agg.samples, fs).db;
    const double b = metrics::segmental_snr(truth, naive.samples, fs).db;
    if (a - b >= 6.0) ++wins;
    detail << fmt("%.1f/%.1f ", a, b);
  }
  return {wins >= 9, fmt("aggregate beats naive by >= 6 dB in %d/10 seeds (SegSNR agg/naive: ", wins) + detail.str() + ")"};
}

// ---------------------------------------------------------------------------
// 4. Quartic versus quadratic on noisy scenes through the full pipeline.

Outcome criterion4() {
  const double fs = 2200.0;
  int wins = 0;
  std::ostringstream detail;
  for (int seed = 0; seed < 10; ++seed) {
    synth::SceneSpec spec;
    spec.width = 72;
    spec.height = 72;
    spec.frame_rate = {2200, 1};
    spec.duration = 1.0;
    spec.noise_sigma = 1.0;
    spec.motion.push_back({{0, 0, 72, 72}, synth::random_carrier(500 + seed, 6, 150.0, 700.0, 0.15), 0.0});
    const auto video = synth::render(spec, static_cast<std::uint64_t>(seed));
    const auto truth = truth_x(spec, 0);
    double snr[2];
    for (int q = 0; q < 2; ++q) {
      RunConfig cfg;
      cfg.mode.interpolation = q ? motion::Interpolation::quartic : motion::Interpolation::quadratic;
      cfg.selection = blocks::SelectionRule::top(0.25);
      const auto r = run_extract(video, cfg);
      snr[q] = metrics::segmental_snr(truth, r.audio.samples, fs).db;
    }
    if (snr[1] >= snr[0]) ++wins;
    detail << fmt("%.2f/%.2f ", snr[1], snr[0]);
  }
  return {wins >= 7, fmt("quartic >= quadratic in %d/10 seeds (SegSNR quartic/quadratic: ", wins) + detail.str() + ")"};
}


// ---------------------------------------------------------------------------
// 5. Plane-wave direction.

struct DirectionTrial {
  double clean_error = 0.0;
  double noisy_error = 0.0;
  double slowness = 0.0;
};

DirectionTrial direction_trial(int seed) {
  std::mt19937_64 rng(3000 + seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const double theta = angle(rng);
  const Vec2 dir{std::cos(theta), std::sin(theta)};
  const auto regions = region_grid(5, 5, 16, 4);
  synth::SceneSpec base;
  base.width = 5 * 20 + 4;
  base.height = 5 * 20 + 4;
  base.frame_rate = {2200, 1};
  base.duration = 1.0;
  const auto carrier = synth::random_carrier(4000 + seed, 8, 100.0, 600.0, 0.1);
  const auto spec = synth::plane_wave_spec(base, dir, 17.0, regions, carrier, 1.0);
  const auto video = synth::render(spec, static_cast<std::uint64_t>(seed));
  const auto rects = inner_blocks(regions, 8);
  const auto grid = blocks::grid_from_rects(rects);
  const auto extracted = blocks::extract_all_blocks(video, grid, {});
  const auto scores = blocks::score_all(extracted, blocks::default_scorer());

  std::vector<direction::BlockInput> inputs;
  for (const auto& b : grid.blocks) inputs.push_back({b.id, b.center, extracted.at(b.id).audio.samples, scores.at(b.id)});
  DirectionTrial out;
  const auto clean = direction::delay_field(inputs, 2200.0);
  out.clean_error = direction::angle_between_deg(clean.fit.direction, dir);
  out.slowness = clean.fit.slowness;

  // 10 dB SNR per block.
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& in : inputs) {
    const double sigma = dsp::rms(in.samples) / std::sqrt(10.0);
    for (double& v : in.samples) v += sigma * normal(rng);
    in.score = blocks::score_block(in.samples, 2200.0);
  }
  const auto noisy = direction::delay_field(inputs, 2200.0);
  out.noisy_error = direction::angle_between_deg(noisy.fit.direction, dir);
  return out;
}

Outcome criterion5() {
  int clean_ok = 0, noisy_ok = 0, slow_ok = 0;
  std::ostringstream detail;
  for (int seed = 0; seed < 10; ++seed) {
    const auto t = direction_trial(seed);
    clean_ok += t.clean_error <= 5.0;
    noisy_ok += t.noisy_error <= 10.0;
    slow_ok += std::abs(t.slowness * 17.0 - 1.0) <= 0.1;
    detail << fmt("%.1f/%.1f ", t.clean_error, t.noisy_error);
  }
  return {clean_ok == 10 && noisy_ok >= 9,
          fmt("clean within 5 deg: %d/10, 10 dB within 10 deg: %d/10, slowness within 10%% of 1/17: %d/10 (errors deg clean/noisy: ",
              clean_ok, noisy_ok, slow_ok) +
              detail.str() + ")"};
}

// ---------------------------------------------------------------------------
// 6. Few-pixel mask versus the block pipeline.

Outcome criterion6() {
  const double fs = 2200.0;
  synth::SceneSpec spec;
  spec.width = 48;
  spec.height = 48;
  spec.frame_rate = {2200, 1};
  spec.duration = 2.0;
  spec.noise_sigma = 0.5;
  // rms of a 0.3 px sinusoid, spread over a broadband carrier
  spec.motion.push_back({{0, 0, 48, 48}, synth::random_carrier(61, 6, 150.0, 700.0, 0.3 / std::numbers::sqrt2), 0.0});
  const auto video = synth::render(spec, 6);
  const auto truth = truth_x(spec, 0);

  const metrics::FrameOptions matched{30.0, metrics::GainPolicy::match_rms};
  double corr[2], snr[2];
  const std::size_t tops[2] = {1, 50};
  for (int i = 0; i < 2; ++i) {
    const auto mask = blocks::build_pixel_mask(video, 0, tops[i]);
    auto sig = blocks::mask_signal(video, mask).samples;
    // Intensity polarity is not observable; orient the output like the truth.
    if (dsp::pearson(sig, truth) < 0.0)
      for (double& v : sig) v = -v;
    corr[i] = dsp::pearson(sig, truth);
    snr[i] = metrics::segmental_snr(truth, sig, fs, matched).db;
  }
  const auto r = run_extract(video, RunConfig{});
  const double block_snr = metrics::segmental_snr(truth, r.audio.samples, fs, matched).db;
  const bool pass = corr[0] >= 0.6 && corr[1] >= 0.8 && snr[0] < block_snr;
  return {pass, fmt("corr top1 %.3f (>= 0.6), top50 %.3f (>= 0.8); SegSNR single pixel %.2f dB < blocks %.2f dB "
                    "(top50 mask %.2f dB, not gated)",
                    corr[0], corr[1], snr[0], block_snr, snr[1])};
}

// ---------------------------------------------------------------------------
// 7. Young's modulus round trip through rendered rod videos.

Outcome criterion7() {
  struct Material {
    const char* name;
    double modulus, density;
  };
  const Material materials[] = {{"aluminium", 69e9, 2700.0}, {"brass", 100e9, 8500.0}};
  const double lengths[] = {0.5588, 0.381};
  const double second_mode_ratio = std::pow(4.69409113 / vibrometry::kClampedFreeLambda1, 2);
  int ok = 0;
  std::ostringstream detail;
  for (const auto& mat : materials)
    for (double len : lengths) {
      const vibrometry::RodSpec rod{len, mat.density, 6.35e-3};
      const double f1 = vibrometry::first_mode_frequency(mat.modulus, rod);
      synth::SceneSpec spec;
      spec.width = 40;
      spec.height = 40;
      spec.frame_rate = {600, 1};
      spec.duration = 6.0;
      spec.noise_sigma = 0.5;
      synth::MotionSeries rodm;
      rodm.tones.push_back({f1, 0.4, 0.0, 0.3});
      rodm.tones.push_back({f1 * second_mode_ratio, 0.05, 0.0, 1.1});
      rodm.decay_per_second = 0.2;
      spec.motion.push_back({{0, 0, 40, 40}, rodm, 0.0});
      const auto video = synth::render(spec, static_cast<std::uint64_t>(len * 1000));
      const auto r = run_extract(video, RunConfig{});
      const auto modes = vibrometry::mode_spectrum(r.audio);
      const double e = vibrometry::youngs_modulus(modes.fundamental_hz, rod);
      const double err = std::abs(e - mat.modulus) / mat.modulus;
      ok += err <= 0.05;
      detail << fmt("%s %.3f m: f1 %.2f Hz -> %.2f Hz, E err %.2f%%; ", mat.name, len, f1, modes.fundamental_hz, 100 * err);
    }
  return {ok == 4, fmt("%d/4 cases within 5%%: ", ok) + detail.str()};
}

// ---------------------------------------------------------------------------
// 8. Operation budget, scaling, pruning and fixed-point agreement.

Outcome criterion8() {
  synth::SceneSpec spec;
  spec.width = 136;
  spec.height = 136;
  spec.frame_rate = {2200, 1};
  spec.duration = 0.4;
  spec.noise_sigma = 0.5;
  spec.motion.push_back({{0, 0, 136, 136}, synth::random_carrier(8, 6, 150.0, 700.0, 0.05), 0.0});
  const auto video = synth::render(spec, 8);
  bench::BenchConfig cfg;
  cfg.track.mode.dimensionality = motion::Dimensionality::two_d;
  cfg.track.mode.arithmetic = motion::Arithmetic::fixed16;
  const auto rep = bench::run_throughput(video, cfg);
  double gpix = 0.0;
  for (const auto& row : rep.rows)
    if (row.workload == "full") gpix = row.throughput / 1e9;
  const double dev = rep.fixed_vs_float_rms.value_or(1.0);
  const bool pass = rep.ops_per_pixel <= 18.0 && rep.total_ops_per_pixel() < 20.0 && rep.scaling_fit.exponent >= 0.9 && rep.scaling_fit.exponent <= 1.2 &&
                    rep.pruned_speedup >= 5.0 && dev < 1e-3;
  return {pass, fmt("per-frame kernel ops/pixel %.4f (<= 18); with recentring %.4f and calibration %.4f, total %.4f (< 20); scaling exponent %.3f (residual %.3f, in [0.9, 1.2]); pruned speedup %.1fx (>= 5); "
                    "fixed vs float RMS %.2e px (< 1e-3); full-workload throughput %.3f Gpixel/s (not gated)",
                    rep.ops_per_pixel, rep.recentre_ops_per_pixel, rep.setup_ops_per_pixel, rep.total_ops_per_pixel(),
                    rep.scaling_fit.exponent, rep.scaling_fit.residual, rep.pruned_speedup, dev, gpix)};
}

// ---------------------------------------------------------------------------
// 10. Metric sanity.

// AR(10) speech-like process from five resonant pole pairs.
std::vector<double> ar_process(const std::vector<double>& a, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> e(0.0, 1.0);
  std::vector<double> x(n + 500, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = e(rng);
    for (std::size_t k = 1; k < a.size() && k <= i; ++k) v -= a[k] * x[i - k];
    x[i] = v;
  }
  return {x.begin() + 500, x.end()};
}

std::vector<double> ar_coefficients(std::span<const double> radii, std::span<const double> freqs, double fs) {
  std::vector<double> a{1.0};
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * freqs[i] / fs;
    const double quad[3] = {1.0, -2.0 * radii[i] * std::cos(w), radii[i] * radii[i]};
    std::vector<double> next(a.size() + 2, 0.0);
    for (std::size_t j = 0; j < a.size(); ++j)
      for (int k = 0; k < 3; ++k) next[j + k] += a[j] * quad[k];
    a = next;
  }
  return a;
}

Outcome criterion10() {
  const double fs = 16000.0;
  const double radii[] = {0.97, 0.95, 0.93, 0.9, 0.88};
  const double freqs[] = {500.0, 1500.0, 2500.0, 3500.0, 4500.0};
  const auto x = ar_process(ar_coefficients(radii, freqs, fs), 32000, 10);
  const double self_snr = metrics::segmental_snr(x, x, fs).db;
  const double self_llr = metrics::mean_llr(x, x, fs).mean;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> sigmas, snrs, llrs;
  const double base = dsp::rms(x);
  for (int k = 0; k < 10; ++k) {
    const double sigma = base * 0.02 * std::pow(1.6, k);
    auto y = x;
    for (double& v : y) v += sigma * normal(rng);
    sigmas.push_back(sigma);
    snrs.push_back(metrics::segmental_snr(x, y, fs).db);
    llrs.push_back(metrics::mean_llr(x, y, fs).mean);
  }
  const double rho_snr = metrics::spearman(sigmas, snrs);
  const double rho_llr = metrics::spearman(sigmas, llrs);
  const bool pass = self_snr == metrics::kSegSnrCeiling && self_llr == 0.0 && rho_snr <= -0.9 && rho_llr >= 0.9;
  return {pass, fmt("seg_snr(x,x) = %.2f dB, mean_llr(x,x) = %.3g; Spearman(noise, SegSNR) = %.3f (<= -0.9), "
                    "Spearman(noise, LLR) = %.3f (>= 0.9, LLR rises as quality drops)",
                    self_snr, self_llr, rho_snr, rho_llr)};
}

// ---------------------------------------------------------------------------
// 9. Bit-identical extraction across worker counts, through the CLI.

#ifndef VMIC_CLI_PATH
#define VMIC_CLI_PATH "vmic"
#endif

Outcome criterion9() {
  const fs::path dir = fs::temp_directory_path() / ("vmic_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  synth::SceneSpec spec;
  spec.width = 96;
  spec.height = 96;
  spec.duration = 1.0;
  spec.noise_sigma = 1.0;
  spec.motion.push_back({{0, 0, 48, 96}, synth::random_carrier(90, 5, 150.0, 700.0, 0.1), 0.0});
  spec.motion.push_back({{48, 0, 48, 96}, synth::random_carrier(91, 5, 150.0, 700.0, 0.1), 0.0});
  {
    std::ofstream(dir / "scene.json") << synth::to_json(spec).dump();
  }
  const std::string cli = VMIC_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null";
    return std::system(cmd.c_str());
  };
  const std::string d = dir.string();
  int rc = run("synth " + d + "/scene.json --seed 9 --output-dir " + d);
  const std::string common = d + "/video.rvid --seed 9 --interpolation quartic --dimensionality 2d --denoise ";
  rc = rc ? rc : run("extract " + common + "--workers 1 --output-dir " + d + "/w1");
  rc = rc ? rc : run("extract " + common + "--workers 3 --output-dir " + d + "/w3");
  if (rc != 0) return {false, fmt("CLI run failed with status %d", rc)};
  bool same = true;
  std::ostringstream detail;
  for (const char* name : {"audio.wav", "scores.csv", "spectrogram.csv", "run.json"}) {
    const auto a = detail::read_file(dir / "w1" / name);
    const auto b = detail::read_file(dir / "w3" / name);
    const bool eq = a == b;
    same = same && eq;
    detail << name << (eq ? " identical" : " DIFFERS") << " (" << a.size() << " bytes); ";
  }
  fs::remove_all(dir);
  return {same, "workers 1 vs 3: " + detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"sub-pixel accuracy at 0.01 px", criterion1},
      {"quadratic vertex formula", criterion2},
      {"aggregation avoids destructive interference", criterion3},
      {"quartic at least as good as quadratic", criterion4},
      {"plane-wave direction", criterion5},
      {"few-pixel mask", criterion6},
      {"Young's modulus round trip", criterion7},
      {"operation budget and scaling", criterion8},
      {"deterministic extraction across worker counts", criterion9},
      {"metric sanity", criterion10},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s: %s [%.1f s] %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
