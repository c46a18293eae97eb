#pragma once

// Magnitude spectrogram for inspection: CSV export and an 8-bit image
// (frequency up, time right) that the CLI encodes as PNG.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "vmic/dsp.hpp"
#include "vmic/error.hpp"
#include "vmic/video_io.hpp"

namespace vmic {

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> times_s;  // frame centres
  std::vector<double> freqs_hz;
  std::vector<double> db;       // frames x bins, row-major

  double at(std::size_t frame, std::size_t bin) const { return db[frame * bins + bin]; }
};

// Frames whose centre falls inside the signal.
inline Spectrogram spectrogram(const AudioSignal& signal, const dsp::StftParams& params) {
  const auto s = dsp::stft(signal.samples, params);
  const double fs = signal.sample_rate;
  const auto half = static_cast<double>(s.window()) / 2.0;
  Spectrogram out;
  out.bins = s.bins();
  for (std::size_t k = 0; k < s.bins(); ++k) out.freqs_hz.push_back(s.bin_frequency(k, fs));
  for (std::size_t m = 0; m < s.frames(); ++m) {
    // stft() zero-pads one window ahead of the signal
    const double centre = static_cast<double>(m * s.hop()) - static_cast<double>(s.window()) + half;
    if (centre < 0.0 || centre >= static_cast<double>(signal.size())) continue;
    out.times_s.push_back(centre / fs);
    for (std::size_t k = 0; k < s.bins(); ++k) out.db.push_back(20.0 * std::log10(std::abs(s.at(m, k)) + 1e-12));
    ++out.frames;
  }
  return out;
}

inline void write_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& sg,
                                  std::span<const std::string> header_comments = {}) {
  std::ofstream out(path);
  if (!out) throw data_error("csv.write", "cannot write " + path.string());
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << "time_s,freq_hz,magnitude_db\n";
  out.precision(8);
  for (std::size_t m = 0; m < sg.frames; ++m)
    for (std::size_t k = 0; k < sg.bins; ++k) out << sg.times_s[m] << ',' << sg.freqs_hz[k] << ',' << sg.at(m, k) << '\n';
}

// Gray levels over the top `range_db` below the peak; row 0 is the highest
// frequency. Returns width = frames, height = bins.
inline std::vector<std::uint8_t> spectrogram_image(const Spectrogram& sg, double range_db = 80.0) {
  std::vector<std::uint8_t> img(sg.frames * sg.bins, 0);
  if (sg.db.empty()) return img;
  const double top = *std::max_element(sg.db.begin(), sg.db.end());
  for (std::size_t m = 0; m < sg.frames; ++m)
    for (std::size_t k = 0; k < sg.bins; ++k) {
      const double v = std::clamp((sg.at(m, k) - (top - range_db)) / range_db, 0.0, 1.0);
      img[(sg.bins - 1 - k) * sg.frames + m] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  return img;
}

}  // namespace vmic
