#pragma once

// Small models and synthetic datasets shared by the unit and acceptance suites.

#include "tavg/config.hpp"
#include "tavg/dataset.hpp"
#include "tavg/synth.hpp"

namespace tavg::testing {

inline train::TrainConfig tiny_config(train::ModelMode mode, std::uint64_t seed = 1) {
  train::TrainConfig c;
  c.mode = mode;
  c.seed = seed;
  c.iterations = 10;
  c.batch_size = 4;
  c.encoder_layers = {{8, 15, 4}, {8, 15, 4}, {16, 15, 4}};
  c.image_size = 16;
  c.g_base_channels = 16;
  c.d_base_channels = 4;
  c.d_gru_channels = 4;
  return c;
}

inline data::Dataset synthetic_dataset(data::DatasetMode mode, double seconds = 3.0, std::uint64_t seed = 1) {
  data::SynthClipOptions o;
  o.seconds = seconds;
  o.seed = seed;
  const auto clip = data::make_synth_clip(o);
  return data::build_dataset(clip.video, media::to_mono(clip.audio), data::SidecarDetector(clip.boxes), mode,
                             "synthetic");
}

}  // namespace tavg::testing
