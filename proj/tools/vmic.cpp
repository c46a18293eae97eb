// vmic: command-line front end. Each subcommand is a thin wrapper over the
// library; this file only parses arguments and moves files around.
//
// Exit codes: 0 success, 2 validation error, 3 data/runtime error. Errors go
// to stderr as a single JSON object.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <png.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "vmic/vmic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vmic;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitData = 3;

void report_error(const std::string& kind, const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"code", code}, {"message", message}}}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Options shared by every subcommand.

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string output_dir = ".";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run configuration; flags override it");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--workers", c.workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app->add_option("--output-dir", c.output_dir, "directory for output files");
}

// Flags that override RunConfig fields; unset ones leave the config alone.
struct Overrides {
  std::optional<int> block_size;
  std::optional<std::string> interpolation;
  std::optional<std::string> dimensionality;
  std::optional<std::string> arithmetic;
  std::optional<double> top_fraction;
  std::optional<double> threshold;
  std::optional<std::size_t> stft_window;
  bool denoise = false;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--block-size", o.block_size, "block edge in pixels (8, 16, 32)");
  app->add_option("--interpolation", o.interpolation, "quadratic or quartic");
  app->add_option("--dimensionality", o.dimensionality, "1d or 2d");
  app->add_option("--arithmetic", o.arithmetic, "float or fixed16");
  auto* top = app->add_option("--top-fraction", o.top_fraction, "keep this fraction of blocks");
  app->add_option("--threshold", o.threshold, "keep blocks scoring above this")->excludes(top);
  app->add_option("--stft-window", o.stft_window, "STFT window (power of two)");
  app->add_flag("--denoise", o.denoise, "spectral noise reduction on the output");
}

RunConfig effective_config(const Common& c, const Overrides* o = nullptr) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  cfg.workers = c.workers;
  if (o) {
    if (o->block_size) cfg.block_size = *o->block_size;
    if (o->interpolation) cfg.mode.interpolation = parse_interpolation(*o->interpolation);
    if (o->dimensionality) cfg.mode.dimensionality = parse_dimensionality(*o->dimensionality);
    if (o->arithmetic) cfg.mode.arithmetic = parse_arithmetic(*o->arithmetic);
    if (o->top_fraction) cfg.selection = blocks::SelectionRule::top(*o->top_fraction);
    if (o->threshold) cfg.selection = blocks::SelectionRule::above(*o->threshold);
    if (o->stft_window) cfg.stft_window = *o->stft_window;
    if (o->denoise) cfg.denoise = true;
  }
  validate(cfg);
  return cfg;
}

fs::path output_path(const Common& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  return fs::path(c.output_dir) / name;
}

// Provenance lines for CSV headers, WAV comments and sidecars.
std::vector<std::string> provenance(const std::string& command, const json& config) {
  return {std::string("vmic ") + kVersion + " " + command, "config " + config.dump()};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw data_error("json.write", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json sidecar(const std::string& command, const json& config) {
  return {{"tool", "vmic"}, {"version", kVersion}, {"command", command}, {"config", config}};
}

FrameSequence load_video(const std::string& path, const std::string& fps) {
  if (fs::is_directory(path)) {
    if (fps.empty()) throw validation_error("video.fps", "--fps is required for an image directory");
    return read_image_sequence(path, parse_rational(fps));
  }
  return read_rvid(path);
}

void write_png(const fs::path& path, const std::vector<std::uint8_t>& gray, std::size_t width, std::size_t height,
               const std::string& comment) {
  if (width == 0 || height == 0) throw data_error("png.empty", "nothing to draw");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw data_error("png.write", "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw data_error("png.write", "libpng failed on " + path.string());
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::string key = "Comment";
  std::string text = comment;
  png_text t{};
  t.compression = PNG_TEXT_COMPRESSION_NONE;
  t.key = key.data();
  t.text = text.data();
  png_set_text(png, info, &t, 1);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) png_write_row(png, gray.data() + y * width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

void write_spectrogram(const Common& c, const AudioSignal& audio, const dsp::StftParams& params,
                       const std::vector<std::string>& prov) {
  const auto sg = spectrogram(audio, params);
  write_spectrogram_csv(output_path(c, "spectrogram.csv"), sg, prov);
  write_png(output_path(c, "spectrogram.png"), spectrogram_image(sg), sg.frames, sg.bins, prov[0] + "\n" + prov[1]);
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_extract(const Common& c, const Overrides& o, const std::string& video_path, const std::string& fps) {
  const RunConfig cfg = effective_config(c, &o);
  const auto video = load_video(video_path, fps);
  const auto r = run_extract(video, cfg);
  const json cj = to_json(cfg);
  const auto prov = provenance("extract", cj);
  write_wav(r.audio, output_path(c, "audio.wav"), prov[0] + "\n" + prov[1]);
  blocks::write_score_csv(output_path(c, "scores.csv"), r.grid, r.scores, prov);
  const auto params = cfg.stft(video.fps());
  if (!r.silent) write_spectrogram(c, r.audio, params, prov);
  json side = sidecar("extract", cj);
  side["input"] = video_path;
  side["silent"] = r.silent;
  side["blocks_total"] = r.grid.blocks.size();
  side["blocks_selected"] = r.scores.selected;
  side["sample_rate"] = video.fps();
  write_json(output_path(c, "run.json"), side);
  std::cout << json{{"wav", output_path(c, "audio.wav").string()},
                    {"silent", r.silent},
                    {"blocks_selected", r.scores.selected.size()},
                    {"blocks_total", r.grid.blocks.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_scoremap(const Common& c, const Overrides& o, const std::string& video_path, const std::string& fps) {
  const RunConfig cfg = effective_config(c, &o);
  const auto video = load_video(video_path, fps);
  const auto grid = blocks::make_grid(video.width(), video.height(), cfg.block_size, cfg.margin);
  const auto extracted = blocks::extract_all_blocks(video, grid, cfg.extract_options());
  const auto map = blocks::select_blocks(
      blocks::score_all(extracted, blocks::default_scorer(cfg.stft(video.fps()).window), cfg.workers), cfg.selection);
  const json cj = to_json(cfg);
  blocks::write_score_csv(output_path(c, "scores.csv"), grid, map, provenance("scoremap", cj));
  json side = sidecar("scoremap", cj);
  side["input"] = video_path;
  side["blocks_selected"] = map.selected;
  write_json(output_path(c, "run.json"), side);
  return 0;
}

int cmd_mask(const Common& c, const std::string& video_path, const std::string& fps, std::optional<std::size_t> top_n,
             std::optional<std::size_t> calibration) {
  RunConfig cfg = effective_config(c);
  if (top_n) cfg.top_n = *top_n;
  if (calibration) cfg.calibration_frames = *calibration;
  validate(cfg);
  const auto video = load_video(video_path, fps);
  const auto mask = blocks::build_pixel_mask(video, cfg.calibration_frames, cfg.top_n, {}, cfg.workers);
  const auto audio = blocks::mask_signal(video, mask);
  const json cj = to_json(cfg);
  const auto prov = provenance("mask", cj);
  blocks::write_mask_csv(output_path(c, "mask.csv"), mask, prov);
  write_wav(audio, output_path(c, "audio.wav"), prov[0] + "\n" + prov[1]);
  json side = sidecar("mask", cj);
  side["input"] = video_path;
  side["calibration_frames"] = mask.frame_count;
  side["pixels"] = mask.pixels.size();
  write_json(output_path(c, "run.json"), side);
  return 0;
}

int cmd_direction(const Common& c, const Overrides& o, const std::string& video_path, const std::string& fps,
                  std::optional<int> max_lag, std::optional<double> pitch, std::size_t segments) {
  RunConfig cfg = effective_config(c, &o);
  if (max_lag) cfg.max_lag = *max_lag;
  if (pitch) cfg.pixel_pitch_mm = *pitch;
  validate(cfg);
  const auto video = load_video(video_path, fps);
  const auto grid = blocks::make_grid(video.width(), video.height(), cfg.block_size, cfg.margin);
  const auto extracted = blocks::extract_all_blocks(video, grid, cfg.extract_options());
  const auto scores = blocks::score_all(extracted, blocks::default_scorer(cfg.stft(video.fps()).window), cfg.workers);
  std::vector<direction::BlockInput> inputs;
  for (const auto& b : grid.blocks) {
    const auto& e = extracted.at(b.id);
    if (e.displacement.lost) continue;
    inputs.push_back({b.id, b.center, e.audio.samples, scores.at(b.id)});
  }
  direction::DelayOptions opts;
  opts.max_lag = direction::physical_max_lag(video.fps(), std::hypot(video.width(), video.height()), cfg.pixel_pitch_mm,
                                             cfg.max_lag);
  opts.workers = cfg.workers;
  const auto field = direction::delay_field(inputs, video.fps(), opts);
  const json cj = to_json(cfg);
  direction::write_delay_csv(output_path(c, "delays.csv"), field, inputs, provenance("direction", cj));
  json result = direction::to_json(field.fit);
  result["reference_block"] = field.reference_block;
  result["undefined_blocks"] = field.undefined;
  result["max_lag_frames"] = opts.max_lag;
  if (segments >= 2) {
    const auto st = direction::direction_stability(inputs, video.fps(), segments, {}, opts);
    result["segment_max_deviation_deg"] = st.max_segment_deviation_deg;
  }
  json side = sidecar("direction", cj);
  side["input"] = video_path;
  side["result"] = result;
  write_json(output_path(c, "direction.json"), side);
  std::cout << result.dump() << '\n';
  return 0;
}

struct RodFlags {
  std::string file;
  std::optional<double> length_m, density, diameter_m;
};

std::optional<vibrometry::RodSpec> rod_from(const RodFlags& f) {
  if (!f.file.empty()) {
    std::ifstream in(f.file);
    if (!in) throw data_error("rod.read", "cannot read " + f.file);
    try {
      const json j = json::parse(in);
      return vibrometry::RodSpec{j.at("length_m").get<double>(), j.at("density_kg_m3").get<double>(),
                                 j.at("diameter_m").get<double>()};
    } catch (const json::exception& e) {
      throw validation_error("rod.json", std::string("invalid rod document: ") + e.what());
    }
  }
  if (!f.length_m && !f.density && !f.diameter_m) return std::nullopt;
  if (!f.length_m || !f.density || !f.diameter_m)
    throw validation_error("rod.partial", "rod needs --rod-length, --rod-density and --rod-diameter together");
  return vibrometry::RodSpec{*f.length_m, *f.density, *f.diameter_m};
}

int cmd_vibrometry(const Common& c, const Overrides& o, const std::string& input, const std::string& fps,
                   const RodFlags& rod_flags) {
  const RunConfig cfg = effective_config(c, &o);
  const auto rod = rod_from(rod_flags);
  if (rod) vibrometry::validate(*rod);
  AudioSignal audio;
  if (fs::path(input).extension() == ".wav") {
    audio = read_wav(input);
  } else {
    const auto r = run_extract(load_video(input, fps), cfg);
    if (r.silent) throw data_error("modes.silent", "extracted signal is silent");
    audio = r.audio;
  }
  const auto modes = vibrometry::mode_spectrum(audio);
  std::optional<double> e;
  if (rod) e = vibrometry::youngs_modulus(modes.fundamental_hz, *rod);
  json result = vibrometry::to_json(modes, e);
  json side = sidecar("vibrometry", to_json(cfg));
  side["input"] = input;
  side["result"] = result;
  write_json(output_path(c, "modes.json"), side);
  std::cout << result.dump() << '\n';
  return 0;
}

int cmd_synth(const Common& c, const std::string& scene_path, const std::string& out_name) {
  std::ifstream in(scene_path);
  if (!in) throw data_error("scene.read", "cannot read " + scene_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw validation_error("scene.json", std::string("malformed scene: ") + e.what());
  }
  const auto spec = synth::scene_from_json(j);
  const std::uint64_t seed = c.seed.value_or(j.value("seed", std::uint64_t{0}));
  const auto video = synth::render(spec, seed, c.workers);
  write_rvid(video, output_path(c, out_name));
  // Ground truth per track, for scoring extractions.
  std::ofstream truth(output_path(c, "truth.csv"));
  truth << "# vmic " << kVersion << " synth seed " << seed << '\n' << "track,frame,x,y\n";
  truth.precision(12);
  for (std::size_t k = 0; k < spec.motion.size(); ++k) {
    const auto d = synth::track_truth(spec, k);
    for (std::size_t t = 0; t < d.size(); ++t) truth << k << ',' << t << ',' << d[t].x << ',' << d[t].y << '\n';
  }
  json side = sidecar("synth", synth::to_json(spec));
  side["seed"] = seed;
  side["frames"] = video.frame_count();
  write_json(output_path(c, "scene.json"), side);
  return 0;
}

int cmd_metrics(const Common& c, const std::string& ref_path, const std::string& test_path, long max_lag,
                const std::string& gain) {
  metrics::GainPolicy policy;
  if (gain == "raw") policy = metrics::GainPolicy::raw;
  else if (gain == "match_rms") policy = metrics::GainPolicy::match_rms;
  else throw validation_error("metrics.gain", "gain must be raw or match_rms");
  const auto report = metrics::evaluate(read_wav(ref_path), read_wav(test_path), max_lag, policy);
  json result = metrics::to_json(report);
  result["gain"] = gain;
  json side = sidecar("metrics", json{{"max_lag", max_lag}, {"gain", gain}});
  side["reference"] = ref_path;
  side["test"] = test_path;
  side["result"] = result;
  write_json(output_path(c, "metrics.json"), side);
  std::cout << result.dump() << '\n';
  return 0;
}

int cmd_bench(const Common& c, const Overrides& o, const std::string& video_path, const std::string& fps, int repeats,
              std::optional<double> realtime_fps, int width, int height) {
  const RunConfig cfg = effective_config(c, &o);
  bench::BenchConfig bc;
  bc.track = cfg.extract_options().track;
  bc.block_size = cfg.block_size;
  if (cfg.selection.kind == blocks::SelectionRule::Kind::top_fraction) bc.top_fraction = cfg.selection.value;
  bc.repeats = repeats;
  bc.workers = {1};
  if (cfg.workers > 1) bc.workers.push_back(cfg.workers);
  const auto video = video_path.empty() ? bench::realtime_workload(width, height, 512, 2200.0, cfg.seed + 1)
                                        : load_video(video_path, fps);
  const auto report = bench::run_throughput(video, bc);
  json result = bench::to_json(report);
  std::printf("%-8s %7s %14s %10s %14s\n", "workload", "workers", "pixels", "seconds", "Mpixel/s");
  for (const auto& row : report.rows)
    std::printf("%-8s %7d %14llu %10.4f %14.1f\n", row.workload.c_str(), row.workers,
                static_cast<unsigned long long>(row.pixels_processed), row.wall_time, row.throughput / 1e6);
  std::printf("ops/pixel %.4f per frame, %.4f total; scaling exponent %.3f; pruned speedup %.1fx\n", report.ops_per_pixel,
              report.total_ops_per_pixel(), report.scaling_fit.exponent, report.pruned_speedup);
  if (realtime_fps) {
    bench::RealtimeConfig rc;
    rc.track = bc.track;
    rc.block_size = bc.block_size;
    rc.top_fraction = bc.top_fraction;
    rc.workers = cfg.workers;
    rc.seed = cfg.seed + 1;
    const auto rt = bench::realtime_check(*realtime_fps, width, height, rc);
    result["realtime"] = bench::to_json(rt);
    std::printf("realtime %s at %.0f fps: achieved %.0f fps (margin %.2fx)%s\n", rt.pass ? "PASS" : "FAIL", *realtime_fps,
                rt.achieved_rate, rt.margin, rt.degenerate ? " [no blocks selected]" : "");
  }
  json side = sidecar("bench", to_json(cfg));
  side["input"] = video_path.empty() ? json("synthetic") : json(video_path);
  side["result"] = result;
  write_json(output_path(c, "bench.json"), side);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recover sound from high-speed video through sub-pixel block motion."};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  Overrides over;
  std::string video, fps, scene, out_name = "video.rvid", ref, test, gain = "raw";
  std::optional<std::size_t> top_n, calibration;
  std::optional<int> max_lag;
  std::optional<double> pitch, realtime_fps;
  std::size_t segments = 0;
  long metric_lag = 2000;
  int repeats = 5, rt_width = 640, rt_height = 480;
  RodFlags rod;

  auto video_arg = [&](CLI::App* sub) {
    sub->add_option("video", video, "RVID file or directory of PGM frames")->required();
    sub->add_option("--fps", fps, "frame rate for an image directory, e.g. 2200 or 30000/1001");
  };

  auto* extract = app.add_subcommand("extract", "recover audio: WAV, score CSV, spectrogram");
  video_arg(extract);
  add_common(extract, common);
  add_overrides(extract, over);

  auto* scoremap = app.add_subcommand("scoremap", "score every block and write the score map");
  video_arg(scoremap);
  add_common(scoremap, common);
  add_overrides(scoremap, over);

  auto* mask = app.add_subcommand("mask", "few-pixel extraction from a calibration prefix");
  video_arg(mask);
  add_common(mask, common);
  mask->add_option("--top-n", top_n, "pixels in the mask");
  mask->add_option("--calibration-frames", calibration, "prefix length (default 10% of the video)");

  auto* dir = app.add_subcommand("direction", "sound arrival direction from per-block delays");
  video_arg(dir);
  add_common(dir, common);
  add_overrides(dir, over);
  dir->add_option("--max-lag", max_lag, "largest delay searched, frames");
  dir->add_option("--pixel-pitch-mm", pitch, "scene size of one pixel; bounds the delay search");
  dir->add_option("--segments", segments, "also report direction spread over this many time segments");

  auto* vib = app.add_subcommand("vibrometry", "mode frequencies and, given a rod, Young's modulus");
  vib->add_option("input", video, "WAV file, RVID file or PGM directory")->required();
  vib->add_option("--fps", fps, "frame rate for an image directory");
  add_common(vib, common);
  add_overrides(vib, over);
  vib->add_option("--rod", rod.file, "JSON {length_m, density_kg_m3, diameter_m}");
  vib->add_option("--rod-length", rod.length_m, "rod free length, m");
  vib->add_option("--rod-density", rod.density, "rod density, kg/m^3");
  vib->add_option("--rod-diameter", rod.diameter_m, "rod diameter, m");

  auto* syn = app.add_subcommand("synth", "render a synthetic scene to RVID");
  syn->add_option("scene", scene, "scene JSON (see docs/scene_format.md)")->required();
  syn->add_option("--output", out_name, "RVID file name inside the output directory");
  add_common(syn, common);

  auto* met = app.add_subcommand("metrics", "SegSNR and LLR of a test WAV against a reference");
  met->add_option("reference", ref)->required();
  met->add_option("test", test)->required();
  met->add_option("--max-lag", metric_lag, "alignment search, samples");
  met->add_option("--gain", gain, "raw or match_rms");
  add_common(met, common);

  auto* ben = app.add_subcommand("bench", "throughput, op count and scaling");
  ben->add_option("video", video, "RVID file or PGM directory (default: synthetic workload)");
  ben->add_option("--fps", fps, "frame rate for an image directory");
  add_common(ben, common);
  add_overrides(ben, over);
  ben->add_option("--repeats", repeats, "timed repeats, median reported")->check(CLI::PositiveNumber);
  ben->add_option("--realtime-fps", realtime_fps, "also check real time at this frame rate");
  ben->add_option("--width", rt_width, "synthetic / real-time frame width");
  ben->add_option("--height", rt_height, "synthetic / real-time frame height");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("validation", "cli.arguments", e.what());
    return kExitValidation;
  }

  try {
    if (*extract) return cmd_extract(common, over, video, fps);
    if (*scoremap) return cmd_scoremap(common, over, video, fps);
    if (*mask) return cmd_mask(common, video, fps, top_n, calibration);
    if (*dir) return cmd_direction(common, over, video, fps, max_lag, pitch, segments);
    if (*vib) return cmd_vibrometry(common, over, video, fps, rod);
    if (*syn) return cmd_synth(common, scene, out_name);
    if (*met) return cmd_metrics(common, ref, test, metric_lag, gain);
    if (*ben) return cmd_bench(common, over, video, fps, repeats, realtime_fps, rt_width, rt_height);
  } catch (const Error& e) {
    const bool validation = e.kind() == ErrorKind::validation;
    report_error(validation ? "validation" : "data", e.code(), e.what());
    return validation ? kExitValidation : kExitData;
  } catch (const fs::filesystem_error& e) {
    report_error("data", "io", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    report_error("data", "internal", e.what());
    return kExitData;
  }
  return 0;
}
