#include "tavg/generator.hpp"

#include <bit>

#include "tavg/errors.hpp"

namespace tavg::gen {

int GeneratorConfig::block_count() const { return std::countr_zero(static_cast<unsigned>(out_size / 4)); }

int GeneratorConfig::feature_channels() const { return base_channels >> block_count(); }

void GeneratorConfig::validate() const {
  if (out_size < 8 || !std::has_single_bit(static_cast<unsigned>(out_size))) {
    throw ConfigError("generator: out_size must be a power of two >= 8, got " + std::to_string(out_size));
  }
  if (frames < 1) throw ConfigError("generator: frames must be positive");
  if (noise_dim <= 0 || embedding_dim <= 0) throw ConfigError("generator: noise and embedding dims must be positive");
  if (base_channels <= 0 || feature_channels() < 1) {
    throw ConfigError("generator: base_channels " + std::to_string(base_channels) +
                      " too small for " + std::to_string(block_count()) + " halving blocks");
  }
  if (gru_kernel <= 0 || gru_kernel % 2 == 0) throw ConfigError("generator: gru_kernel must be odd");
}

nn::ParamList GeneratorWeights::parameters() const {
  nn::ParamList out{{"generator.fusion.weight", fusion_weight},
                    {"generator.fusion.bias", fusion_bias},
                    {"generator.fusion.gamma", fusion_norm.gamma},
                    {"generator.fusion.beta", fusion_norm.beta}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "generator.block" + std::to_string(i);
    out.push_back({p + ".weight", blocks[i].weight});
    out.push_back({p + ".gamma", blocks[i].norm.gamma});
    out.push_back({p + ".beta", blocks[i].norm.beta});
  }
  if (gru) {
    for (auto& p : gru->parameters("generator.gru")) out.push_back(std::move(p));
  } else {
    out.push_back({"generator.head.weight", head_weight});
    out.push_back({"generator.head.bias", head_bias});
  }
  return out;
}

std::vector<ag::BatchNormBuffers*> GeneratorWeights::norm_buffers() {
  std::vector<ag::BatchNormBuffers*> out{&fusion_norm.buffers};
  for (auto& b : blocks) out.push_back(&b.norm.buffers);
  return out;
}

GeneratorWeights init_generator(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  nn::Rng rng(seed);
  GeneratorWeights w;
  w.config = config;
  const int base = config.base_channels;
  w.fusion_weight =
      nn::normal_param({base * 16, config.noise_dim + config.embedding_dim}, nn::kInitStddev, rng);
  w.fusion_bias = nn::filled_param({base * 16}, 0.0);
  w.fusion_norm = nn::BatchNorm::make(base);
  int in_c = base;
  for (int i = 0; i < config.block_count(); ++i) {
    const int out_c = in_c / 2;
    w.blocks.push_back({nn::normal_param({in_c, out_c, 4, 4}, nn::kInitStddev, rng), nn::BatchNorm::make(out_c)});
    in_c = out_c;
  }
  if (config.head == Head::gru) {
    gru::GruConfig gc;
    gc.c_in = in_c;
    gc.c_h = 3;
    gc.height = config.out_size;
    gc.width = config.out_size;
    gc.kernel_size = config.gru_kernel;
    w.gru = gru::init_gru(gc, rng);
  } else {
    w.head_weight = nn::normal_param({config.output_channels(), in_c, 3, 3}, nn::kInitStddev, rng);
    w.head_bias = nn::filled_param({config.output_channels()}, 0.0);
  }
  return w;
}

ag::Var generate_batch(const ag::Var& z, const ag::Var& y, GeneratorWeights& weights, ag::NormMode mode) {
  const auto& cfg = weights.config;
  if (z.value().rank() != 2 || z.dim(1) != cfg.noise_dim) {
    throw ConfigError("generator: noise shape " + shape_string(z.shape()) + ", expected [N, " +
                      std::to_string(cfg.noise_dim) + "]");
  }
  if (y.value().rank() != 2 || y.dim(1) != cfg.embedding_dim || y.dim(0) != z.dim(0)) {
    throw ConfigError("generator: condition shape " + shape_string(y.shape()) + " does not match noise " +
                      shape_string(z.shape()));
  }
  const int n = z.dim(0);
  ag::Var h = ag::linear(ag::concat_channels({z, y}), weights.fusion_weight, weights.fusion_bias);
  h = ag::reshape(h, {n, cfg.base_channels, 4, 4});
  h = ag::relu(weights.fusion_norm(h, mode));
  const auto up = ag::ConvGeometry::square(4, 2, 1);
  for (auto& block : weights.blocks) {
    h = ag::relu(block.norm(ag::conv_transpose2d(h, block.weight, ag::Var{}, up), mode));
  }
  if (weights.gru) {
    const auto states = gru::unroll_constant(h, cfg.frames, gru::zero_state(weights.gru->config, n), *weights.gru);
    return states.size() == 1 ? states.front() : ag::concat_channels(states);
  }
  return ag::tanh(ag::conv2d(h, weights.head_weight, weights.head_bias, ag::ConvGeometry::same(3)));
}

std::vector<Tensor> generate(std::span<const Real> z, const audio::AudioEmbedding& y, GeneratorWeights& weights) {
  const auto& cfg = weights.config;
  if (static_cast<int>(z.size()) != cfg.noise_dim) {
    throw ConfigError("generator: noise must have " + std::to_string(cfg.noise_dim) + " values");
  }
  Tensor zt({1, cfg.noise_dim}, std::vector<Real>(z.begin(), z.end()));
  Tensor yt({1, cfg.embedding_dim}, std::vector<Real>(y.values().begin(), y.values().end()));
  const ag::Var out = generate_batch(ag::constant(std::move(zt)), ag::constant(std::move(yt)), weights,
                                     ag::NormMode::inference);
  std::vector<Tensor> frames;
  const std::size_t frame_size = static_cast<std::size_t>(3) * cfg.out_size * cfg.out_size;
  for (int t = 0; t < cfg.frames; ++t) {
    const Real* src = out.value().data() + t * frame_size;
    frames.emplace_back(std::vector<int>{3, cfg.out_size, cfg.out_size},
                        std::vector<Real>(src, src + frame_size));
  }
  return frames;
}

Tensor sample_noise(int n, int dim, nn::Rng& rng) {
  Tensor t({n, dim});
  std::normal_distribution<Real> dist(0.0, 1.0);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace tavg::gen
