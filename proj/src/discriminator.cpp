#include "tavg/discriminator.hpp"

#include <bit>

#include "tavg/errors.hpp"

namespace tavg::disc {

int DiscriminatorConfig::block_count() const {
  return std::countr_zero(static_cast<unsigned>(in_size / 4));
}

int DiscriminatorConfig::feature_channels() const { return base_channels << (block_count() - 1); }

void DiscriminatorConfig::validate() const {
  if (in_size < 8 || !std::has_single_bit(static_cast<unsigned>(in_size))) {
    throw ConfigError("discriminator: in_size must be a power of two >= 8, got " + std::to_string(in_size));
  }
  if (base_channels <= 0 || gru_channels <= 0 || embedding_dim <= 0 || frames < 1) {
    throw ConfigError("discriminator: channel counts and frames must be positive");
  }
  if (gru_kernel <= 0 || gru_kernel % 2 == 0) throw ConfigError("discriminator: gru_kernel must be odd");
}

nn::ParamList DiscriminatorWeights::parameters() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "discriminator.block" + std::to_string(i);
    out.push_back({p + ".weight", blocks[i].weight});
    if (blocks[i].norm) {
      out.push_back({p + ".gamma", blocks[i].norm->gamma});
      out.push_back({p + ".beta", blocks[i].norm->beta});
    }
  }
  for (auto& p : gru.parameters("discriminator.gru")) out.push_back(std::move(p));
  out.push_back({"discriminator.head.conv.weight", head_conv_weight});
  out.push_back({"discriminator.head.conv.bias", head_conv_bias});
  out.push_back({"discriminator.head.out.weight", out_weight});
  out.push_back({"discriminator.head.out.bias", out_bias});
  return out;
}

std::vector<ag::BatchNormBuffers*> DiscriminatorWeights::norm_buffers() {
  std::vector<ag::BatchNormBuffers*> out;
  for (auto& b : blocks) {
    if (b.norm) out.push_back(&b.norm->buffers);
  }
  return out;
}

DiscriminatorWeights init_discriminator(const DiscriminatorConfig& config, std::uint64_t seed) {
  config.validate();
  nn::Rng rng(seed);
  DiscriminatorWeights w;
  w.config = config;
  int in_c = 3;
  for (int i = 0; i < config.block_count(); ++i) {
    const int out_c = config.base_channels << i;
    DiscriminatorWeights::Block block;
    block.weight = nn::normal_param({out_c, in_c, 4, 4}, nn::kInitStddev, rng);
    if (i > 0) block.norm = nn::BatchNorm::make(out_c);
    w.blocks.push_back(std::move(block));
    in_c = out_c;
  }
  gru::GruConfig gc;
  gc.c_in = in_c;
  gc.c_h = config.gru_channels;
  gc.height = 4;
  gc.width = 4;
  gc.kernel_size = config.gru_kernel;
  w.gru = gru::init_gru(gc, rng);
  w.head_conv_weight = nn::normal_param({config.gru_channels, config.gru_channels + config.embedding_dim, 3, 3},
                                        nn::kInitStddev, rng);
  w.head_conv_bias = nn::filled_param({config.gru_channels}, 0.0);
  w.out_weight = nn::normal_param({1, config.gru_channels}, nn::kInitStddev, rng);
  w.out_bias = nn::filled_param({1}, 0.0);
  return w;
}

ag::Var discriminate_batch(const ag::Var& frames, const ag::Var& y, DiscriminatorWeights& weights,
                           ag::NormMode mode) {
  const auto& cfg = weights.config;
  const auto& fs = frames.shape();
  if (fs.size() != 4 || fs[1] != 3 * cfg.frames) {
    throw ConfigError("discriminator: wrong frame count, expected " + std::to_string(cfg.frames) +
                      " RGB frames, got shape " + shape_string(fs));
  }
  if (fs[2] != cfg.in_size || fs[3] != cfg.in_size) {
    throw ConfigError("discriminator: wrong resolution " + std::to_string(fs[2]) + "x" +
                      std::to_string(fs[3]) + ", expected " + std::to_string(cfg.in_size));
  }
  if (y.value().rank() != 2 || y.dim(0) != fs[0] || y.dim(1) != cfg.embedding_dim) {
    throw ConfigError("discriminator: condition shape " + shape_string(y.shape()));
  }
  const int n = fs[0];
  const int t_count = cfg.frames;

  ag::Var h = ag::reshape(frames, {n * t_count, 3, cfg.in_size, cfg.in_size});
  const auto down = ag::ConvGeometry::square(4, 2, 1);
  for (auto& block : weights.blocks) {
    h = ag::conv2d(h, block.weight, ag::Var{}, down);
    if (block.norm) h = (*block.norm)(h, mode);
    h = ag::leaky_relu(h, cfg.leaky_slope);
  }
  std::vector<ag::Var> steps;
  for (int t = 0; t < t_count; ++t) steps.push_back(ag::select_rows(h, t_count, t));
  const auto states = gru::unroll(steps, gru::zero_state(weights.gru.config, n), weights.gru);

  ag::Var joined = ag::concat_channels({states.back(), ag::broadcast_spatial(y, 4, 4)});
  ag::Var head = ag::leaky_relu(
      ag::conv2d(joined, weights.head_conv_weight, weights.head_conv_bias, ag::ConvGeometry::same(3)),
      cfg.leaky_slope);
  return ag::sigmoid(ag::linear(ag::global_avg_pool(head), weights.out_weight, weights.out_bias));
}

Real discriminate(std::span<const Tensor> frames, const audio::AudioEmbedding& y, DiscriminatorWeights& weights) {
  const auto& cfg = weights.config;
  if (static_cast<int>(frames.size()) != cfg.frames) {
    throw ConfigError("discriminator: wrong frame count, expected " + std::to_string(cfg.frames) + ", got " +
                      std::to_string(frames.size()));
  }
  const std::size_t frame_size = static_cast<std::size_t>(3) * cfg.in_size * cfg.in_size;
  Tensor x({1, 3 * cfg.frames, cfg.in_size, cfg.in_size});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].shape() != std::vector<int>{3, cfg.in_size, cfg.in_size}) {
      throw ConfigError("discriminator: wrong resolution " + shape_string(frames[t].shape()));
    }
    std::copy(frames[t].data(), frames[t].data() + frame_size, x.data() + t * frame_size);
  }
  Tensor yt({1, cfg.embedding_dim}, std::vector<Real>(y.values().begin(), y.values().end()));
  const ag::Var p = discriminate_batch(ag::constant(std::move(x)), ag::constant(std::move(yt)), weights,
                                       ag::NormMode::inference);
  return p.value()[0];
}

}  // namespace tavg::disc
