#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tavg/convgru.hpp"
#include "tavg/encoder.hpp"

namespace tavg::disc {

struct DiscriminatorConfig {
  int in_size = 64;
  int base_channels = 64;
  int embedding_dim = audio::kEmbeddingDim;
  Real leaky_slope = 0.2;
  int frames = 3;
  int gru_channels = 64;
  int gru_kernel = 3;

  /// Stride-2 blocks down to a 4x4 map.
  int block_count() const;
  int feature_channels() const;
  void validate() const;
};

struct DiscriminatorWeights {
  struct Block {
    ag::Var weight;                   // [out, in, 4, 4], no bias
    std::optional<nn::BatchNorm> norm;  // absent on the first block
  };

  DiscriminatorConfig config;
  std::vector<Block> blocks;  // shared across time steps
  gru::GruWeights gru;
  ag::Var head_conv_weight;  // [gru_channels, gru_channels + embedding, 3, 3]
  ag::Var head_conv_bias;
  ag::Var out_weight;  // [1, gru_channels]
  ag::Var out_bias;

  nn::ParamList parameters() const;
  std::vector<ag::BatchNormBuffers*> norm_buffers();
};

DiscriminatorWeights init_discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

/// frames: [N, 3 * frames, S, S] (frame t in channels 3t..3t+2), y: [N, embedding].
/// Returns realness probabilities [N, 1].
///
/// Each frame goes through the weight-tied conv stack, the ConvGRU consumes the
/// per-frame features in order from a zero state, and the last hidden state is
/// joined with the spatially broadcast condition before the scoring head.
ag::Var discriminate_batch(const ag::Var& frames, const ag::Var& y, DiscriminatorWeights& weights,
                           ag::NormMode mode);

/// Inference-mode score in (0, 1) for one sequence of [3, S, S] frames.
Real discriminate(std::span<const Tensor> frames, const audio::AudioEmbedding& y,
                  DiscriminatorWeights& weights);

}  // namespace tavg::disc
