#include "tavg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tavg/errors.hpp"

namespace tavg::data {
namespace {

constexpr int kWatermarkRows = 8;

struct Syllable {
  double start;
  double end;
  double f0;
  double gain;
};

std::vector<Syllable> plan_syllables(double seconds, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dur(0.08, 0.3), gap(0.02, 0.2), f0(110.0, 240.0), gain(0.3, 0.7);
  std::vector<Syllable> out;
  double t = gap(rng);
  while (t < seconds) {
    const double d = dur(rng);
    out.push_back({t, t + d, f0(rng), gain(rng)});
    t += d + gap(rng);
  }
  return out;
}

void fill_disc(media::RgbFrame& f, double cx, double cy, double rx, double ry, const std::uint8_t color[3]) {
  const int x0 = std::max(0, static_cast<int>(cx - rx)), x1 = std::min(f.width - 1, static_cast<int>(cx + rx) + 1);
  const int y0 = std::max(0, static_cast<int>(cy - ry)), y1 = std::min(f.height - 1, static_cast<int>(cy + ry) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0)
        for (int c = 0; c < 3; ++c) f.at(x, y, c) = color[c];
    }
}

}  // namespace

FaceBox synth_face_box(const SynthClipOptions& o) {
  const int side = std::min({64, o.width, o.height});
  return {(o.width - side) / 2, (o.height - side) / 2, side, side};
}

int watermark_offset(int segment) { return 100 + 10 * (segment % 140); }

SynthClip make_synth_clip(const SynthClipOptions& o) {
  if (o.seconds <= 0 || o.fps <= 0 || o.sample_rate <= 0 || o.channels <= 0 || o.width < 16 || o.height < 16) {
    throw ConfigError("invalid synthetic clip options");
  }
  std::mt19937_64 rng(o.seed);
  const auto n_samples = static_cast<std::size_t>(std::llround(o.seconds * o.sample_rate));
  const auto n_frames = static_cast<int>(std::llround(o.seconds * o.fps));

  // Speech-like audio: voiced bursts with a few harmonics and a smooth envelope.
  const auto syllables = plan_syllables(o.seconds, rng);
  const double level = o.watermark ? 0.1 : 1.0;
  std::vector<double> mono(n_samples, 0.0);
  std::normal_distribution<double> noise(0.0, 0.003);
  for (std::size_t i = 0; i < n_samples; ++i) mono[i] = noise(rng);
  for (const auto& s : syllables) {
    const auto a = static_cast<std::size_t>(s.start * o.sample_rate);
    const auto b = std::min(n_samples, static_cast<std::size_t>(s.end * o.sample_rate));
    for (std::size_t i = a; i < b; ++i) {
      const double t = static_cast<double>(i) / o.sample_rate;
      const double env = std::sin(std::numbers::pi * (t - s.start) / (s.end - s.start));
      double v = 0.0;
      for (int h = 1; h <= 4; ++h) v += std::sin(2 * std::numbers::pi * s.f0 * h * t) / h;
      mono[i] += level * s.gain * env * env * v / 2.1;
    }
  }
  if (o.watermark) {
    const double per_target = o.sample_rate / 16000.0;
    for (std::size_t k = 0;; ++k) {
      const double pos = (static_cast<double>(k) * 1600 + watermark_offset(static_cast<int>(k))) * per_target;
      const auto i = static_cast<std::size_t>(std::llround(pos));
      if ((k + 1) * 1600 * per_target > static_cast<double>(n_samples)) break;
      mono[i] = 0.95;
    }
  }

  SynthClip clip;
  clip.audio.sample_rate = o.sample_rate;
  clip.audio.channels = o.channels;
  clip.audio.interleaved.resize(n_samples * static_cast<std::size_t>(o.channels));
  for (std::size_t i = 0; i < n_samples; ++i)
    for (int c = 0; c < o.channels; ++c) {
      const double v = std::clamp(mono[i], -1.0, 1.0) * 32767.0;
      clip.audio.interleaved[i * o.channels + c] = static_cast<std::int16_t>(std::lround(v));
    }

  // Loudness per frame drives the mouth.
  std::vector<double> loudness(static_cast<std::size_t>(n_frames), 0.0);
  double peak = 1e-9;
  for (int f = 0; f < n_frames; ++f) {
    const auto a = static_cast<std::size_t>(static_cast<double>(f) * o.sample_rate / o.fps);
    const auto b = std::min(n_samples, static_cast<std::size_t>(static_cast<double>(f + 1) * o.sample_rate / o.fps));
    double acc = 0.0;
    for (std::size_t i = a; i < b; ++i) acc += mono[i] * mono[i];
    loudness[f] = b > a ? std::sqrt(acc / static_cast<double>(b - a)) : 0.0;
    peak = std::max(peak, loudness[f]);
  }

  std::uniform_int_distribution<int> tone(40, 200);
  const std::uint8_t bg[3] = {static_cast<std::uint8_t>(tone(rng)), static_cast<std::uint8_t>(tone(rng)),
                              static_cast<std::uint8_t>(tone(rng))};
  const std::uint8_t skin[3] = {224, 172, 140}, eye[3] = {40, 40, 60}, lip[3] = {150, 50, 60}, mouth[3] = {60, 10, 20};
  const FaceBox box = synth_face_box(o);
  const double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0, r = box.w * 0.42;

  clip.video.fps = o.fps;
  for (int f = 0; f < n_frames; ++f) {
    media::RgbFrame frame(o.width, o.height);
    for (int y = 0; y < o.height; ++y)
      for (int x = 0; x < o.width; ++x)
        for (int c = 0; c < 3; ++c)
          frame.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(bg[c] + (y * 24) / o.height - 12, 0, 255));
    if (!o.faceless_frames.count(f)) {
      fill_disc(frame, cx, cy, r, r * 1.1, skin);
      fill_disc(frame, cx - r * 0.38, cy - r * 0.25, r * 0.12, r * 0.09, eye);
      fill_disc(frame, cx + r * 0.38, cy - r * 0.25, r * 0.12, r * 0.09, eye);
      const double open = loudness[f] / peak;
      fill_disc(frame, cx, cy + r * 0.45, r * 0.36, r * (0.07 + 0.28 * open), lip);
      fill_disc(frame, cx, cy + r * 0.45, r * 0.28, r * 0.22 * open + 0.3, mouth);
      if (o.watermark) {
        for (int y = box.y; y < box.y + kWatermarkRows; ++y)
          for (int x = box.x; x < box.x + box.w; ++x)
            for (int c = 0; c < 3; ++c) frame.at(x, y, c) = static_cast<std::uint8_t>(f % 256);
      }
      clip.boxes[f].push_back(box);
    }
    clip.video.frames.push_back(std::move(frame));
  }
  return clip;
}

void write_synth_clip(const SynthClip& clip, const std::filesystem::path& avi_path,
                      const std::filesystem::path& faces_path) {
  media::write_avi(avi_path, clip.video, static_cast<int>(std::lround(clip.video.fps)), clip.audio);
  SidecarDetector::save(faces_path, clip.boxes);
}

}  // namespace tavg::data
