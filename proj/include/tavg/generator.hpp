#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tavg/convgru.hpp"
#include "tavg/encoder.hpp"

namespace tavg::gen {

inline constexpr int kNoiseDim = 100;

enum class Head {
  gru,     // frames are the hidden states of a ConvGRU unrolled over the backbone output
  direct,  // one convolution emits 3 * frames channels, split into frames
};

struct GeneratorConfig {
  Head head = Head::gru;
  int noise_dim = kNoiseDim;
  int embedding_dim = audio::kEmbeddingDim;
  int base_channels = 512;
  int out_size = 64;
  int frames = 3;
  int gru_kernel = 3;

  int block_count() const;
  /// Channels of the backbone output feeding the head.
  int feature_channels() const;
  int output_channels() const { return 3 * frames; }
  void validate() const;
};

struct GeneratorWeights {
  struct Block {
    ag::Var weight;  // transposed conv [in, out, 4, 4], no bias
    nn::BatchNorm norm;
  };

  GeneratorConfig config;
  ag::Var fusion_weight;  // [base * 16, noise + embedding]
  ag::Var fusion_bias;
  nn::BatchNorm fusion_norm;
  std::vector<Block> blocks;
  std::optional<gru::GruWeights> gru;  // Head::gru
  ag::Var head_weight;                 // Head::direct: [3 * frames, features, 3, 3]
  ag::Var head_bias;

  nn::ParamList parameters() const;
  std::vector<ag::BatchNormBuffers*> norm_buffers();
};

GeneratorWeights init_generator(const GeneratorConfig& config, std::uint64_t seed);

/// z: [N, noise_dim], y: [N, embedding_dim] -> [N, 3 * frames, S, S] with
/// frame t in channels 3t..3t+2, every value in [-1, 1].
ag::Var generate_batch(const ag::Var& z, const ag::Var& y, GeneratorWeights& weights,
                       ag::NormMode mode);

/// Inference-mode generation for a single condition. Returns `frames`
/// tensors of shape [3, S, S].
std::vector<Tensor> generate(std::span<const Real> z, const audio::AudioEmbedding& y,
                             GeneratorWeights& weights);

/// Standard-normal noise [n, dim].
Tensor sample_noise(int n, int dim, nn::Rng& rng);

}  // namespace tavg::gen
