#include "tavg/encoder.hpp"

#include "tavg/errors.hpp"

namespace tavg::audio {

EncoderConfig EncoderConfig::segment_default() {
  EncoderConfig c;
  c.layers = {{32, 15, 4}, {64, 15, 4}, {64, 15, 4}, {128, 15, 4}, {128, 15, 4}};
  c.input_length = 1600;
  return c;
}

EncoderConfig EncoderConfig::baseline_default() {
  EncoderConfig c = segment_default();
  c.layers.push_back({128, 15, 4});
  c.input_length = 16000;
  return c;
}

void EncoderConfig::validate() const {
  if (layers.empty()) throw ConfigError("encoder: at least one layer is required");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kernel_size <= 0 || l.stride <= 0 || l.out_channels <= 0) {
      throw ConfigError("encoder: invalid layer spec at index " + std::to_string(i) +
                        " (channels, kernel and stride must be positive)");
    }
  }
  if (embedding_dim != kEmbeddingDim) {
    throw ConfigError("encoder: embedding_dim must be " + std::to_string(kEmbeddingDim));
  }
  if (input_length <= 0) throw ConfigError("encoder: input_length must be positive");
}

AudioEmbedding::AudioEmbedding(std::span<const Real> values) {
  if (values.size() != kEmbeddingDim) {
    throw ConfigError("audio embedding must have " + std::to_string(kEmbeddingDim) + " values");
  }
  std::copy(values.begin(), values.end(), values_.begin());
}

nn::ParamList EncoderWeights::parameters() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back({"encoder.conv" + std::to_string(i) + ".weight", layers[i].weight});
    out.push_back({"encoder.conv" + std::to_string(i) + ".bias", layers[i].bias});
  }
  out.push_back({"encoder.head.weight", head_weight});
  out.push_back({"encoder.head.bias", head_bias});
  return out;
}

EncoderWeights init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  nn::Rng rng(seed);
  EncoderWeights w;
  w.config = config;
  int in_c = 1;
  for (const auto& spec : config.layers) {
    EncoderWeights::Layer layer;
    layer.weight = nn::normal_param({spec.out_channels, in_c, 1, spec.kernel_size}, nn::kInitStddev, rng);
    layer.bias = nn::filled_param({spec.out_channels}, 0.0);
    w.layers.push_back(std::move(layer));
    in_c = spec.out_channels;
  }
  w.head_weight = nn::normal_param({config.embedding_dim, in_c}, nn::kInitStddev, rng);
  w.head_bias = nn::filled_param({config.embedding_dim}, 0.0);
  return w;
}

ag::Var encode_batch(const ag::Var& segments, const EncoderWeights& weights) {
  const auto& cfg = weights.config;
  if (segments.value().rank() != 2 || segments.dim(1) != cfg.input_length) {
    throw ConfigError("wrong input length: encoder expects [N, " + std::to_string(cfg.input_length) +
                      "], got " + shape_string(segments.shape()));
  }
  const int n = segments.dim(0);
  ag::Var h = ag::reshape(segments, {n, 1, 1, cfg.input_length});
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& spec = cfg.layers[i];
    const ag::ConvGeometry g{1, spec.kernel_size, 1, spec.stride, 0, spec.kernel_size / 2};
    h = ag::leaky_relu(ag::conv2d(h, weights.layers[i].weight, weights.layers[i].bias, g),
                       cfg.leaky_slope);
  }
  return ag::linear(ag::global_avg_pool(h), weights.head_weight, weights.head_bias);
}

AudioEmbedding encode(std::span<const float> segment, const EncoderWeights& weights) {
  if (static_cast<int>(segment.size()) != weights.config.input_length) {
    throw ConfigError("wrong input length: expected " + std::to_string(weights.config.input_length) +
                      " samples, got " + std::to_string(segment.size()));
  }
  Tensor t({1, weights.config.input_length});
  for (std::size_t i = 0; i < segment.size(); ++i) t[i] = segment[i];
  const ag::Var y = encode_batch(ag::constant(std::move(t)), weights);
  return AudioEmbedding(y.value().values());
}

}  // namespace tavg::audio
