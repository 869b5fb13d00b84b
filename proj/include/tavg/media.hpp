#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tavg/tensor.hpp"

namespace tavg::media {

/// 8-bit RGB image, row-major, channels interleaved. Intensities map to [0, 1]
/// as byte / 255.
struct RgbFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RgbFrame() = default;
  RgbFrame(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  friend bool operator==(const RgbFrame&, const RgbFrame&) = default;
};

struct FrameSequence {
  double fps = 0.0;
  std::vector<RgbFrame> frames;
};

/// Mono waveform with amplitudes in [-1, 1].
struct AudioTrack {
  int sample_rate = 0;
  std::vector<Real> samples;
};

/// Interleaved signed 16-bit PCM, as stored in WAV and AVI files.
struct PcmAudio {
  int sample_rate = 0;
  int channels = 1;
  std::vector<std::int16_t> interleaved;

  std::size_t frame_count() const { return channels > 0 ? interleaved.size() / channels : 0; }
};

/// Averages channels and scales to [-1, 1).
AudioTrack to_mono(const PcmAudio& pcm);
/// Rounds to 16-bit PCM with clipping.
PcmAudio to_pcm(const AudioTrack& track);

// Uncompressed AVI: one 24-bit BI_RGB video stream and one 16-bit PCM audio
// stream. A zero-length video chunk marks a dropped frame, i.e. variable
// frame rate, and is rejected on read.
struct AviContents {
  FrameSequence video;
  PcmAudio audio;
};
AviContents read_avi(const std::filesystem::path& path);
void write_avi(const std::filesystem::path& path, const FrameSequence& video, int fps, const PcmAudio& audio);

PcmAudio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const PcmAudio& audio);

RgbFrame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbFrame& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
/// Creates the parent directory of `path` if it is missing.
void ensure_parent(const std::filesystem::path& path);

}  // namespace tavg::media
