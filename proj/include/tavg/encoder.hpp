#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tavg/nn.hpp"

namespace tavg::audio {

inline constexpr int kEmbeddingDim = 128;

struct EncoderLayerSpec {
  int out_channels = 0;
  int kernel_size = 0;
  int stride = 0;
};

struct EncoderConfig {
  std::vector<EncoderLayerSpec> layers;
  int input_length = 1600;
  int embedding_dim = kEmbeddingDim;
  Real leaky_slope = 0.2;

  /// Five kernel-15 stride-4 layers for 0.1 s segments at 16 kHz.
  static EncoderConfig segment_default();
  /// Same pattern plus one stride-4 layer for 1 s inputs.
  static EncoderConfig baseline_default();

  void validate() const;
};

/// Condition vector y shared by the generator and the discriminator.
class AudioEmbedding {
 public:
  AudioEmbedding() { values_.fill(0.0); }
  explicit AudioEmbedding(std::span<const Real> values);

  std::span<const Real> values() const noexcept { return values_; }
  Real operator[](std::size_t i) const { return values_[i]; }
  static constexpr std::size_t size() noexcept { return kEmbeddingDim; }

  friend bool operator==(const AudioEmbedding&, const AudioEmbedding&) = default;

 private:
  std::array<Real, kEmbeddingDim> values_{};
};

struct EncoderWeights {
  struct Layer {
    ag::Var weight;  // [out, in, 1, kernel]
    ag::Var bias;    // [out]
  };

  EncoderConfig config;
  std::vector<Layer> layers;
  ag::Var head_weight;  // [embedding_dim, last_channels]
  ag::Var head_bias;    // [embedding_dim]

  nn::ParamList parameters() const;
};

/// Weights ~ N(0, 0.02^2), biases zero.
EncoderWeights init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// segments: [N, input_length] -> [N, embedding_dim]. Conv stack with leaky
/// activation, global average pooling over time, then an affine head.
ag::Var encode_batch(const ag::Var& segments, const EncoderWeights& weights);

AudioEmbedding encode(std::span<const float> segment, const EncoderWeights& weights);

}  // namespace tavg::audio
