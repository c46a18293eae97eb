#pragma once

// Run configuration shared by the CLI subcommands. JSON documents and
// command-line flags both land here; validate() runs before any work.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "vmic/blocks.hpp"
#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/motion.hpp"

namespace vmic {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  int block_size = 8;
  int margin = 4;
  motion::MotionMode mode;
  blocks::SelectionRule selection;
  std::size_t stft_window = 0;  // 0: chosen from the frame rate
  std::size_t stft_hop = 0;     // 0: window / 4
  bool denoise = false;
  std::uint64_t seed = 0;
  int workers = 1;
  // direction
  int max_lag = 50;
  double pixel_pitch_mm = 0.0;  // 0: unknown, max_lag cap applies
  // mask
  std::size_t calibration_frames = 0;  // 0: first 10% of the video
  std::size_t top_n = 50;

  dsp::StftParams stft(double sample_rate) const {
    return {stft_window ? stft_window : dsp::default_window(sample_rate), stft_hop};
  }
  blocks::ExtractOptions extract_options() const { return {{mode, margin}, workers}; }
};

inline void validate(const RunConfig& c) {
  if (c.block_size != 8 && c.block_size != 16 && c.block_size != 32)
    throw validation_error("config.block_size", "block_size must be 8, 16 or 32");
  const int radius = c.mode.interpolation == motion::Interpolation::quartic ? 2 : 1;
  if (c.margin < radius + 1) throw validation_error("config.margin", "margin must exceed the lag radius");
  if (c.mode.arithmetic == motion::Arithmetic::fixed16 && c.block_size * c.block_size > motion::kFixedPointMaxArea)
    throw validation_error("config.arithmetic", "block too large for fixed-point arithmetic");
  if (c.selection.kind == blocks::SelectionRule::Kind::top_fraction && !(c.selection.value >= 0.0 && c.selection.value <= 1.0))
    throw validation_error("config.selection", "top_fraction must lie in [0, 1]");
  if (c.stft_window != 0 && (!dsp::is_power_of_two(c.stft_window) || c.stft_window < 16))
    throw validation_error("config.stft_window", "stft window must be a power of two >= 16");
  if (c.stft_hop != 0 && c.stft_hop != (c.stft_window ? c.stft_window : 0) / 4)
    throw validation_error("config.stft_hop", "stft hop must be window / 4");
  if (c.workers < 1) throw validation_error("config.workers", "workers must be at least 1");
  if (c.max_lag < 1) throw validation_error("config.max_lag", "max_lag must be at least 1");
  if (c.pixel_pitch_mm < 0.0) throw validation_error("config.pixel_pitch", "pixel pitch must be non-negative");
  if (c.top_n < 1) throw validation_error("config.top_n", "top_n must be at least 1");
}

inline nlohmann::json to_json(const RunConfig& c) {
  using motion::Arithmetic, motion::Dimensionality, motion::Interpolation;
  nlohmann::json sel;
  if (c.selection.kind == blocks::SelectionRule::Kind::top_fraction)
    sel = {{"top_fraction", c.selection.value}};
  else
    sel = {{"threshold", c.selection.value}};
  return {{"block_size", c.block_size},
          {"margin", c.margin},
          {"interpolation", c.mode.interpolation == Interpolation::quartic ? "quartic" : "quadratic"},
          {"dimensionality", c.mode.dimensionality == Dimensionality::two_d ? "2d" : "1d"},
          {"arithmetic", c.mode.arithmetic == Arithmetic::fixed16 ? "fixed16" : "float"},
          {"selection", sel},
          {"stft_window", c.stft_window},
          {"stft_hop", c.stft_hop},
          {"denoise", c.denoise},
          {"seed", c.seed},
          {"max_lag", c.max_lag},
          {"pixel_pitch_mm", c.pixel_pitch_mm},
          {"calibration_frames", c.calibration_frames},
          {"top_n", c.top_n},
          {"version", kVersion}};
}

inline motion::Interpolation parse_interpolation(const std::string& s) {
  if (s == "quadratic") return motion::Interpolation::quadratic;
  if (s == "quartic") return motion::Interpolation::quartic;
  throw validation_error("config.interpolation", "interpolation must be quadratic or quartic");
}

inline motion::Dimensionality parse_dimensionality(const std::string& s) {
  if (s == "1d") return motion::Dimensionality::one_d;
  if (s == "2d") return motion::Dimensionality::two_d;
  throw validation_error("config.dimensionality", "dimensionality must be 1d or 2d");
}

inline motion::Arithmetic parse_arithmetic(const std::string& s) {
  if (s == "float") return motion::Arithmetic::float64;
  if (s == "fixed16") return motion::Arithmetic::fixed16;
  throw validation_error("config.arithmetic", "arithmetic must be float or fixed16");
}

// Fields absent from `j` keep the values already in `c`. Unknown keys are
// rejected so typos do not silently fall back to defaults. Worker count is
// deliberately not part of the document: it never changes results.
inline RunConfig merge_json(RunConfig c, const nlohmann::json& j) {
  static const char* known[] = {"block_size", "margin",      "interpolation", "dimensionality", "arithmetic",
                                "selection",  "stft_window", "stft_hop",      "denoise",        "seed",
                                "max_lag",    "pixel_pitch_mm", "calibration_frames", "top_n", "version", "workers"};
  if (!j.is_object()) throw validation_error("config.json", "config document must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw validation_error("config.unknown_key", "unknown config key '" + key + "'");
  try {
    if (j.contains("block_size")) c.block_size = j["block_size"].get<int>();
    if (j.contains("margin")) c.margin = j["margin"].get<int>();
    if (j.contains("interpolation")) c.mode.interpolation = parse_interpolation(j["interpolation"].get<std::string>());
    if (j.contains("dimensionality")) c.mode.dimensionality = parse_dimensionality(j["dimensionality"].get<std::string>());
    if (j.contains("arithmetic")) c.mode.arithmetic = parse_arithmetic(j["arithmetic"].get<std::string>());
    if (j.contains("selection")) {
      const auto& s = j["selection"];
      if (s.contains("top_fraction"))
        c.selection = blocks::SelectionRule::top(s["top_fraction"].get<double>());
      else if (s.contains("threshold"))
        c.selection = blocks::SelectionRule::above(s["threshold"].get<double>());
      else
        throw validation_error("config.selection", "selection needs top_fraction or threshold");
    }
    if (j.contains("stft_window")) c.stft_window = j["stft_window"].get<std::size_t>();
    if (j.contains("stft_hop")) c.stft_hop = j["stft_hop"].get<std::size_t>();
    if (j.contains("denoise")) c.denoise = j["denoise"].get<bool>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("max_lag")) c.max_lag = j["max_lag"].get<int>();
    if (j.contains("pixel_pitch_mm")) c.pixel_pitch_mm = j["pixel_pitch_mm"].get<double>();
    if (j.contains("calibration_frames")) c.calibration_frames = j["calibration_frames"].get<std::size_t>();
    if (j.contains("top_n")) c.top_n = j["top_n"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("config.json", std::string("invalid config value: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw data_error("config.read", "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("config.json", std::string("malformed config: ") + e.what());
  }
  return merge_json(std::move(base), j);
}

}  // namespace vmic
