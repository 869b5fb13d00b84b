#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "tavg/face.hpp"
#include "tavg/media.hpp"

namespace tavg::data {

/// Parameters for a procedurally generated talking-face clip. The face is a
/// shaded disc whose mouth opening follows the loudness of the audio under
/// each frame, so audio and frames are correlated the way speech video is.
struct SynthClipOptions {
  double seconds = 3.0;
  int fps = 30;
  int width = 80;
  int height = 80;
  int sample_rate = 48000;
  int channels = 2;
  std::uint64_t seed = 1;
  /// Frames that get a blank background and no annotation.
  std::set<int> faceless_frames;
  /// Embeds index markers: the top face rows of frame t have gray level
  /// t mod 256, and segment k carries an impulse at 16 kHz offset
  /// watermark_offset(k) within the segment.
  bool watermark = false;
};

struct SynthClip {
  media::FrameSequence video;
  media::PcmAudio audio;
  std::map<int, std::vector<FaceBox>> boxes;
};

/// The face box; chosen so a 64x64 crop is an identity resize at default size.
FaceBox synth_face_box(const SynthClipOptions& options);
int watermark_offset(int segment);

SynthClip make_synth_clip(const SynthClipOptions& options);

/// Writes `<stem>.avi` and the `<stem>.faces` annotation sidecar.
void write_synth_clip(const SynthClip& clip, const std::filesystem::path& avi_path,
                      const std::filesystem::path& faces_path);

}  // namespace tavg::data
