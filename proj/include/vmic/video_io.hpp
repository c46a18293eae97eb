#pragma once

// Frame containers and file formats: RVID raw video, binary PGM image
// sequences, and 16-bit PCM WAV audio.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vmic/error.hpp"

namespace vmic {

struct Rational {
  std::uint32_t num = 0;
  std::uint32_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

// Parses "2200", "2200/1" or "30000/1001". Decimal rates are accepted with
// up to three fractional digits.
inline Rational parse_rational(const std::string& text) {
  auto fail = [&] { return validation_error("rate.parse", "cannot parse frame rate '" + text + "'"); };
  try {
    if (auto slash = text.find('/'); slash != std::string::npos) {
      const auto num = std::stoull(text.substr(0, slash));
      const auto den = std::stoull(text.substr(slash + 1));
      if (num == 0 || den == 0 || num > UINT32_MAX || den > UINT32_MAX) throw fail();
      return {static_cast<std::uint32_t>(num), static_cast<std::uint32_t>(den)};
    }
    const double v = std::stod(text);
    if (!(v > 0.0) || v * 1000.0 > UINT32_MAX) throw fail();
    const double rounded = std::round(v);
    if (std::abs(v - rounded) < 1e-9) return {static_cast<std::uint32_t>(rounded), 1};
    return {static_cast<std::uint32_t>(std::llround(v * 1000.0)), 1000};
  } catch (const std::logic_error&) {
    throw fail();
  }
}

// Ordered grayscale frames sharing one size. Intensities are stored as
// 16-bit regardless of bit depth; 8-bit sequences simply never exceed 255.
class FrameSequence {
 public:
  FrameSequence() = default;

  FrameSequence(int width, int height, Rational frame_rate, int bit_depth,
                std::vector<std::uint16_t> pixels)
      : width_(width), height_(height), frame_rate_(frame_rate), bit_depth_(bit_depth),
        pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0)
      throw validation_error("frames.size", "frame dimensions must be positive");
    if (frame_rate.num == 0 || frame_rate.den == 0)
      throw validation_error("frames.rate", "frame rate must be positive");
    if (bit_depth != 8 && bit_depth != 16)
      throw validation_error("frames.bit_depth", "bit depth must be 8 or 16, got " + std::to_string(bit_depth));
    const std::size_t area = frame_area();
    if (pixels_.size() % area != 0)
      throw validation_error("frames.payload", "pixel count is not a multiple of the frame area");
    if (frame_count() < 2)
      throw validation_error("frames.count", "a frame sequence needs at least two frames");
    if (bit_depth == 8) {
      const auto max = *std::max_element(pixels_.begin(), pixels_.end());
      if (max > 255)
        throw validation_error("frames.range", "intensity " + std::to_string(max) + " does not fit 8 bits");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Rational frame_rate() const { return frame_rate_; }
  double fps() const { return frame_rate_.value(); }
  int bit_depth() const { return bit_depth_; }
  std::size_t frame_area() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
  std::size_t frame_count() const { return pixels_.empty() ? 0 : pixels_.size() / frame_area(); }

  std::span<const std::uint16_t> frame(std::size_t t) const {
    return {pixels_.data() + t * frame_area(), frame_area()};
  }
  std::uint16_t at(std::size_t t, int x, int y) const {
    return pixels_[t * frame_area() + static_cast<std::size_t>(y) * width_ + x];
  }
  const std::vector<std::uint16_t>& pixels() const { return pixels_; }

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  Rational frame_rate_{};
  int bit_depth_ = 8;
  std::vector<std::uint16_t> pixels_;
};

struct AudioSignal {
  double sample_rate = 0.0;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  bool all_finite() const {
    return std::all_of(samples.begin(), samples.end(), [](double v) { return std::isfinite(v); });
  }
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("io.open", "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("io.write", "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("io.write", "short write to '" + path.string() + "'");
}

inline std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t load_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void store_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void store_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RVID: "RVID" magic, six little-endian u32 header fields (width, height,
// fps numerator, fps denominator, bit depth, frame count), then the frames
// row-major with 1 or 2 bytes per pixel.

inline constexpr std::size_t kRvidHeaderSize = 28;

inline FrameSequence decode_rvid(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "RVID", 4) != 0)
    throw data_error("rvid.magic", "missing RVID magic");
  if (bytes.size() < kRvidHeaderSize)
    throw data_error("rvid.header", "RVID header truncated (" + std::to_string(bytes.size()) + " bytes)");
  const unsigned char* h = bytes.data() + 4;
  const std::uint32_t width = detail::load_u32(h);
  const std::uint32_t height = detail::load_u32(h + 4);
  const Rational rate{detail::load_u32(h + 8), detail::load_u32(h + 12)};
  const std::uint32_t depth = detail::load_u32(h + 16);
  const std::uint32_t count = detail::load_u32(h + 20);
  if (width == 0 || height == 0 || width > 65536 || height > 65536)
    throw data_error("rvid.header", "implausible frame size " + std::to_string(width) + "x" + std::to_string(height));
  if (rate.num == 0 || rate.den == 0) throw data_error("rvid.header", "frame rate must be positive");
  if (depth != 8 && depth != 16)
    throw data_error("rvid.bit_depth", "unsupported bit depth " + std::to_string(depth));
  if (count < 2) throw data_error("rvid.header", "RVID needs at least two frames");

  const std::size_t bpp = depth / 8;
  const std::size_t area = static_cast<std::size_t>(width) * height;
  const std::size_t expected = area * count * bpp;
  const std::size_t actual = bytes.size() - kRvidHeaderSize;
  if (actual < expected)
    throw data_error("rvid.truncated", "truncated payload: expected " + std::to_string(expected) +
                                           " bytes, found " + std::to_string(actual));
  if (actual > expected)
    throw data_error("rvid.trailing", "payload has " + std::to_string(actual - expected) + " trailing bytes");

  std::vector<std::uint16_t> pixels(area * count);
  const unsigned char* p = bytes.data() + kRvidHeaderSize;
  if (bpp == 1) {
    std::copy(p, p + expected, pixels.begin());
  } else {
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = detail::load_u16(p + 2 * i);
  }
  try {
    return FrameSequence(static_cast<int>(width), static_cast<int>(height), rate, static_cast<int>(depth),
                         std::move(pixels));
  } catch (const Error& e) {
    throw data_error("rvid.payload", e.what());
  }
}

inline std::vector<unsigned char> encode_rvid(const FrameSequence& video) {
  std::vector<unsigned char> out;
  const std::size_t bpp = static_cast<std::size_t>(video.bit_depth()) / 8;
  out.reserve(kRvidHeaderSize + video.pixels().size() * bpp);
  out.insert(out.end(), {'R', 'V', 'I', 'D'});
  detail::store_u32(out, static_cast<std::uint32_t>(video.width()));
  detail::store_u32(out, static_cast<std::uint32_t>(video.height()));
  detail::store_u32(out, video.frame_rate().num);
  detail::store_u32(out, video.frame_rate().den);
  detail::store_u32(out, static_cast<std::uint32_t>(video.bit_depth()));
  detail::store_u32(out, static_cast<std::uint32_t>(video.frame_count()));
  if (bpp == 1) {
    for (auto v : video.pixels()) out.push_back(static_cast<unsigned char>(v));
  } else {
    for (auto v : video.pixels()) detail::store_u16(out, v);
  }
  return out;
}

inline FrameSequence read_rvid(const std::filesystem::path& path) {
  return decode_rvid(detail::read_file(path));
}

inline void write_rvid(const FrameSequence& video, const std::filesystem::path& path) {
  detail::write_file(path, encode_rvid(video));
}

// ---------------------------------------------------------------------------
// Binary PGM (P5). 16-bit samples are big-endian per the netpbm convention.

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> pixels;
};

inline PgmImage decode_pgm(std::span<const unsigned char> bytes, const std::string& name = "image") {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw data_error("pgm.header", name + ": header value too large");
      ++pos;
      any = true;
    }
    if (!any) throw data_error("pgm.header", name + ": malformed header");
    return static_cast<int>(v);
  };

  if (bytes.size() < 2 || bytes[0] != 'P') throw data_error("pgm.format", name + ": not a netpbm file");
  if (bytes[1] == '6' || bytes[1] == '3')
    throw data_error("pgm.color", name + ": color images are not supported, convert to grayscale");
  if (bytes[1] != '5') throw data_error("pgm.format", name + ": only binary P5 PGM is supported");
  pos = 2;
  PgmImage img;
  img.width = read_int();
  img.height = read_int();
  img.maxval = read_int();
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw data_error("pgm.header", name + ": invalid header values");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw data_error("pgm.header", name + ": malformed header");
  ++pos;

  const std::size_t bpp = img.maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() - pos < count * bpp) throw data_error("pgm.truncated", name + ": truncated pixel data");
  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    img.pixels[i] = bpp == 1 ? bytes[pos + i]
                             : static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
  }
  return img;
}

inline std::vector<unsigned char> encode_pgm(const PgmImage& img) {
  std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                       std::to_string(img.maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (auto v : img.pixels) {
    if (img.maxval > 255) {
      out.push_back(static_cast<unsigned char>(v >> 8));
      out.push_back(static_cast<unsigned char>(v & 0xff));
    } else {
      out.push_back(static_cast<unsigned char>(v));
    }
  }
  return out;
}

inline PgmImage read_pgm(const std::filesystem::path& path) {
  return decode_pgm(detail::read_file(path), path.filename().string());
}

inline void write_pgm(const PgmImage& img, const std::filesystem::path& path) {
  detail::write_file(path, encode_pgm(img));
}

// Every .pgm/.ppm/.pnm file in `dir`, ordered by filename.
inline FrameSequence read_image_sequence(const std::filesystem::path& dir, Rational frame_rate) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw data_error("images.dir", "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") files.push_back(entry.path());
  }
  if (files.empty()) throw data_error("images.empty", "no PGM images in '" + dir.string() + "'");
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  std::vector<std::uint16_t> pixels;
  int width = 0;
  int height = 0;
  int depth = 8;
  for (const auto& file : files) {
    PgmImage img = read_pgm(file);
    if (width == 0) {
      width = img.width;
      height = img.height;
      pixels.reserve(static_cast<std::size_t>(width) * height * files.size());
    } else if (img.width != width || img.height != height) {
      throw data_error("images.size_mismatch", file.filename().string() + " is " + std::to_string(img.width) + "x" +
                                                   std::to_string(img.height) + ", expected " +
                                                   std::to_string(width) + "x" + std::to_string(height));
    }
    if (img.maxval > 255) depth = 16;
    pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
  }
  try {
    return FrameSequence(width, height, frame_rate, depth, std::move(pixels));
  } catch (const Error& e) {
    throw data_error("images.invalid", e.what());
  }
}

// ---------------------------------------------------------------------------
// WAV: RIFF/WAVE, PCM, mono, 16-bit. Output is peak-normalized to 0.9 of
// full scale.

inline constexpr double kWavPeak = 0.9;

// A non-empty `comment` is stored as a LIST/INFO ICMT chunk ahead of the
// data chunk; readers that do not know it skip it.
inline std::vector<unsigned char> encode_wav(const AudioSignal& signal, const std::string& comment = {}) {
  if (signal.samples.empty()) throw validation_error("wav.empty", "cannot write an empty signal");
  if (!signal.all_finite()) throw validation_error("wav.nonfinite", "signal contains NaN or Inf");
  if (!(signal.sample_rate > 0.0)) throw validation_error("wav.rate", "sample rate must be positive");

  double peak = 0.0;
  for (double v : signal.samples) peak = std::max(peak, std::abs(v));
  const double scale = peak > 0.0 ? kWavPeak * 32767.0 / peak : 0.0;

  const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  std::vector<unsigned char> info;
  if (!comment.empty()) {
    const auto text = static_cast<std::uint32_t>(comment.size() + 1);  // NUL-terminated
    info.insert(info.end(), {'L', 'I', 'S', 'T'});
    detail::store_u32(info, 4 + 8 + text + (text & 1u));
    info.insert(info.end(), {'I', 'N', 'F', 'O', 'I', 'C', 'M', 'T'});
    detail::store_u32(info, text);
    info.insert(info.end(), comment.begin(), comment.end());
    info.push_back(0);
    if (text & 1u) info.push_back(0);
  }
  std::vector<unsigned char> out;
  out.reserve(44 + info.size() + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::store_u32(out, static_cast<std::uint32_t>(36 + info.size()) + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::store_u32(out, 16);
  detail::store_u16(out, 1);  // PCM
  detail::store_u16(out, 1);  // mono
  detail::store_u32(out, rate);
  detail::store_u32(out, rate * 2);
  detail::store_u16(out, 2);
  detail::store_u16(out, 16);
  out.insert(out.end(), info.begin(), info.end());
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::store_u32(out, data_bytes);
  for (double v : signal.samples) {
    const long q = std::clamp(std::lround(v * scale), -32768L, 32767L);
    detail::store_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

inline void write_wav(const AudioSignal& signal, const std::filesystem::path& path, const std::string& comment = {}) {
  detail::write_file(path, encode_wav(signal, comment));
}

// The ICMT text of a WAV written with a comment, or empty.
inline std::string wav_comment(std::span<const unsigned char> bytes) {
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::load_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) break;
    if (std::memcmp(chunk, "LIST", 4) == 0 && size >= 12 && std::memcmp(bytes.data() + body, "INFO", 4) == 0) {
      std::size_t p = body + 4;
      while (p + 8 <= body + size) {
        const std::uint32_t n = detail::load_u32(bytes.data() + p + 4);
        if (p + 8 + n > body + size) break;
        if (std::memcmp(bytes.data() + p, "ICMT", 4) == 0) {
          std::string text(reinterpret_cast<const char*>(bytes.data() + p + 8), n);
          while (!text.empty() && text.back() == '\0') text.pop_back();
          return text;
        }
        p += 8 + n + (n & 1u);
      }
    }
    pos = body + size + (size & 1u);
  }
  return {};
}

// Reads 16-bit PCM WAV; multi-channel files yield their first channel.
// Samples are scaled to [-1, 1).
inline AudioSignal decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw data_error("wav.format", "not a RIFF/WAVE file");
  std::size_t pos = 12;
  int channels = 0;
  int bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::load_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw data_error("wav.truncated", "WAV chunk exceeds file size");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw data_error("wav.format", "fmt chunk too small");
      const std::uint16_t format = detail::load_u16(bytes.data() + body);
      channels = detail::load_u16(bytes.data() + body + 2);
      rate = detail::load_u32(bytes.data() + body + 4);
      bits = detail::load_u16(bytes.data() + body + 14);
      if (format != 1 || bits != 16 || channels < 1)
        throw data_error("wav.format", "only 16-bit PCM WAV is supported");
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (channels == 0) throw data_error("wav.format", "data chunk before fmt chunk");
      AudioSignal out;
      out.sample_rate = rate;
      const std::size_t frames = size / (2u * static_cast<std::uint32_t>(channels));
      out.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        const auto raw = static_cast<std::int16_t>(detail::load_u16(bytes.data() + body + 2 * i * channels));
        out.samples[i] = raw / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw data_error("wav.format", "WAV file has no data chunk");
}

inline AudioSignal read_wav(const std::filesystem::path& path) { return decode_wav(detail::read_file(path)); }

}  // namespace vmic
