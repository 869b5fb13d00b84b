#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tavg/dataset.hpp"
#include "tavg/discriminator.hpp"
#include "tavg/encoder.hpp"
#include "tavg/generator.hpp"

namespace tavg::train {

enum class ModelMode { with_gru, no_gru, baseline };

std::string to_string(ModelMode mode);
ModelMode parse_model_mode(const std::string& text);

/// Every knob of a training run. The text form is `key = value` lines with
/// `#` comments; unknown keys and malformed values are rejected.
struct TrainConfig {
  ModelMode mode = ModelMode::with_gru;
  std::uint64_t seed = 0;
  long iterations = 1000;
  int batch_size = 16;
  Real lr_d = 1e-4;
  Real lr_g = 1e-4;
  Real beta1 = 0.5;
  Real beta2 = 0.999;
  Real adam_eps = 1e-8;
  long checkpoint_every = 0;  // 0: only the final checkpoint

  /// Encoder stack for 0.1 s segments; baseline mode appends one more copy
  /// of the last layer and takes 1 s inputs.
  std::vector<audio::EncoderLayerSpec> encoder_layers = audio::EncoderConfig::segment_default().layers;
  Real leaky_slope = 0.2;
  /// Model resolution. Dataset crops larger than this are box-averaged down.
  int image_size = 64;
  int g_base_channels = 512;
  int g_gru_kernel = 3;
  int d_base_channels = 64;
  int d_gru_channels = 64;
  int d_gru_kernel = 3;

  int frames() const { return mode == ModelMode::baseline ? 1 : 3; }
  data::DatasetMode dataset_mode() const {
    return mode == ModelMode::baseline ? data::DatasetMode::baseline : data::DatasetMode::triplet;
  }
  audio::EncoderConfig encoder_config() const;
  gen::GeneratorConfig generator_config() const;
  disc::DiscriminatorConfig discriminator_config() const;
  void validate() const;

  std::string to_text() const;
  static TrainConfig parse(const std::string& text, const std::string& origin = "config");
  static TrainConfig load(const std::filesystem::path& path);
};

}  // namespace tavg::train
