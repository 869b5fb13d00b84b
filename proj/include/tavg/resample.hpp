#pragma once

#include "tavg/media.hpp"

namespace tavg::data {

inline constexpr int kTargetSampleRate = 16000;

/// Band-limited resampling with a Kaiser-windowed sinc kernel. Output length
/// is round(len * target / source); samples outside the track are supplied by
/// odd (point) reflection about the end samples. Output is clipped to [-1, 1].
/// A track already at the target rate is returned unchanged.
media::AudioTrack resample_audio(const media::AudioTrack& track, int target_rate = kTargetSampleRate);

}  // namespace tavg::data
