#pragma once

// End-to-end extraction: blocks -> scores -> selection -> aggregation ->
// optional denoise.

#include <map>
#include <vector>

#include "vmic/aggregation.hpp"
#include "vmic/blocks.hpp"
#include "vmic/config.hpp"
#include "vmic/dsp.hpp"
#include "vmic/video_io.hpp"

namespace vmic {

struct ExtractResult {
  blocks::BlockGrid grid;
  std::map<std::size_t, blocks::ExtractedBlock> blocks;
  blocks::BlockScoreMap scores;
  AudioSignal audio;
  bool silent = false;  // every selected block was motionless
};

inline constexpr double kSilenceRms = 1e-6;

inline ExtractResult run_extract(const FrameSequence& video, const RunConfig& config) {
  validate(config);
  ExtractResult r;
  r.grid = blocks::make_grid(video.width(), video.height(), config.block_size, config.margin);
  r.blocks = blocks::extract_all_blocks(video, r.grid, config.extract_options());
  const auto stft = config.stft(video.fps());
  r.scores = blocks::select_blocks(blocks::score_all(r.blocks, blocks::default_scorer(stft.window), config.workers),
                                   config.selection);
  const auto chosen = blocks::selected_signals(r.blocks, r.scores);
  if (chosen.empty()) throw validation_error("extract.selection", "selection rule kept no blocks");
  r.audio = aggregate(chosen, stft);
  if (dsp::rms(r.audio.samples) < kSilenceRms) {
    r.silent = true;
    std::fill(r.audio.samples.begin(), r.audio.samples.end(), 0.0);
    return r;
  }
  if (config.denoise) r.audio = denoise(r.audio, stft);
  return r;
}

}  // namespace vmic
