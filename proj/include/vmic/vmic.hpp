#pragma once

#include "vmic/aggregation.hpp"
#include "vmic/bench.hpp"
#include "vmic/blocks.hpp"
#include "vmic/config.hpp"
#include "vmic/direction.hpp"
#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/metrics.hpp"
#include "vmic/motion.hpp"
#include "vmic/parallel.hpp"
#include "vmic/pipeline.hpp"
#include "vmic/spectrogram.hpp"
#include "vmic/synth.hpp"
#include "vmic/video_io.hpp"
#include "vmic/vibrometry.hpp"
