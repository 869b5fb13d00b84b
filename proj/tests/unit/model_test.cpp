#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/gradcheck.hpp"
#include "tavg/discriminator.hpp"
#include "tavg/encoder.hpp"
#include "tavg/errors.hpp"
#include "tavg/generator.hpp"
#include "tavg/ops.hpp"

using namespace tavg;
using tavg::testing::check_gradients;
using tavg::testing::random_projection;
using tavg::testing::random_tensor;

namespace {

void scale_params(const nn::ParamList& params, double factor) {
  for (const auto& p : params) {
    if (p.name.find("gamma") != std::string::npos) continue;
    ag::Var var = p.var;
    for (auto& v : var.mutable_value().values()) v *= factor;
  }
}

void zero_params(const nn::ParamList& params) {
  for (const auto& p : params) {
    ag::Var var = p.var;
    var.mutable_value().fill(0.0);
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::vector<float> random_segment(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> s(n);
  for (auto& v : s) v = d(rng);
  return s;
}

audio::AudioEmbedding random_embedding(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto t = random_tensor({audio::kEmbeddingDim}, rng);
  return audio::AudioEmbedding(t.values());
}

gen::GeneratorConfig small_generator(gen::Head head) {
  gen::GeneratorConfig c;
  c.head = head;
  c.base_channels = 32;
  c.out_size = 16;
  return c;
}

disc::DiscriminatorConfig small_discriminator() {
  disc::DiscriminatorConfig c;
  c.in_size = 16;
  c.base_channels = 4;
  c.gru_channels = 4;
  return c;
}

std::vector<Tensor> random_frames(int size, std::mt19937_64& rng) {
  std::vector<Tensor> f;
  for (int t = 0; t < 3; ++t) f.push_back(random_tensor({3, size, size}, rng));
  return f;
}

}  // namespace

// ---------------------------------------------------------------- encoder

TEST(Encoder, InitDeterministicPerSeed) {
  const auto cfg = audio::EncoderConfig::segment_default();
  const auto a = audio::init_encoder(cfg, 7), b = audio::init_encoder(cfg, 7), c = audio::init_encoder(cfg, 8);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].var.value(), pb[i].var.value());
    any_diff |= !(pa[i].var.value() == pc[i].var.value());
  }
  EXPECT_TRUE(any_diff);
  for (const auto& l : a.layers)
    for (Real v : l.bias.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, DefaultArchitecture) {
  const auto cfg = audio::EncoderConfig::segment_default();
  ASSERT_EQ(cfg.layers.size(), 5u);
  const int channels[] = {32, 64, 64, 128, 128};
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(cfg.layers[i].out_channels, channels[i]);
    EXPECT_EQ(cfg.layers[i].kernel_size, 15);
    EXPECT_EQ(cfg.layers[i].stride, 4);
  }
  EXPECT_EQ(cfg.input_length, 1600);
  EXPECT_EQ(cfg.embedding_dim, 128);
  EXPECT_DOUBLE_EQ(cfg.leaky_slope, 0.2);
  const auto base = audio::EncoderConfig::baseline_default();
  EXPECT_EQ(base.layers.size(), 6u);
  EXPECT_EQ(base.input_length, 16000);
}

TEST(Encoder, ParameterCountClosedForm) {
  for (const auto& cfg : {audio::EncoderConfig::segment_default(), audio::EncoderConfig::baseline_default()}) {
    std::size_t expected = 0;
    int c_in = 1;
    for (const auto& l : cfg.layers) {
      expected += static_cast<std::size_t>(l.kernel_size) * c_in * l.out_channels + l.out_channels;
      c_in = l.out_channels;
    }
    expected += static_cast<std::size_t>(c_in) * 128 + 128;
    EXPECT_EQ(nn::parameter_count(audio::init_encoder(cfg, 1).parameters()), expected);
  }
  // Default stack: 512 + 30784 + 61504 + 123008 + 245888 conv plus a 16512 head.
  EXPECT_EQ(nn::parameter_count(audio::init_encoder(audio::EncoderConfig::segment_default(), 1).parameters()),
            478208u);
}

TEST(Encoder, RejectsInvalidLayers) {
  auto cfg = audio::EncoderConfig::segment_default();
  cfg.layers[2].stride = 0;
  EXPECT_THROW(audio::init_encoder(cfg, 1), ConfigError);
  cfg = audio::EncoderConfig::segment_default();
  cfg.layers[0].kernel_size = -3;
  EXPECT_THROW(audio::init_encoder(cfg, 1), ConfigError);
}

TEST(Encoder, OutputShapeAndDeterminism) {
  const auto w = audio::init_encoder(audio::EncoderConfig::segment_default(), 3);
  const auto seg = random_segment(1600, 1);
  const auto a = audio::encode(seg, w), b = audio::encode(seg, w);
  EXPECT_EQ(a.values().size(), 128u);
  for (Real v : a.values()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == audio::encode(random_segment(1600, 2), w));
}

TEST(Encoder, ZeroWeightsGiveZeroEmbedding) {
  const auto w = audio::init_encoder(audio::EncoderConfig::segment_default(), 3);
  zero_params(w.parameters());
  for (Real v : audio::encode(random_segment(1600, 4), w).values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, WrongInputLength) {
  const auto w = audio::init_encoder(audio::EncoderConfig::segment_default(), 3);
  try {
    audio::encode(random_segment(16000, 1), w);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("wrong input length"), std::string::npos);
  }
  const auto wb = audio::init_encoder(audio::EncoderConfig::baseline_default(), 3);
  EXPECT_EQ(audio::encode(random_segment(16000, 1), wb).values().size(), 128u);
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
  audio::EncoderConfig cfg;
  cfg.layers = {{6, 5, 2}, {8, 3, 2}};
  cfg.input_length = 40;
  const auto w = audio::init_encoder(cfg, 11);
  scale_params(w.parameters(), 20.0);
  std::mt19937_64 rng(2);
  const auto x = ag::constant(random_tensor({2, 40}, rng));
  const auto r = check_gradients(w.parameters(), [&] { return random_projection(audio::encode_batch(x, w), 5); },
                                 80, 9);
  EXPECT_GE(r.checked, 50u);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

// -------------------------------------------------------------- generator

TEST(Generator, InitDeterministicAndHeads) {
  const auto a = gen::init_generator(small_generator(gen::Head::gru), 5);
  const auto b = gen::init_generator(small_generator(gen::Head::gru), 5);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].var.value(), pb[i].var.value());
  ASSERT_TRUE(a.gru.has_value());
  EXPECT_EQ(a.gru->config.c_h, 3);
  EXPECT_EQ(a.gru->config.activation, gru::CandidateActivation::tanh);

  const auto d = gen::init_generator(small_generator(gen::Head::direct), 5);
  EXPECT_FALSE(d.gru.has_value());
  EXPECT_EQ(d.head_weight.dim(0), 9);
  EXPECT_EQ(d.config.output_channels(), 9);
  for (const auto& blk : a.blocks) {
    for (Real v : blk.norm.gamma.value().values()) EXPECT_EQ(v, 1.0);
    for (Real v : blk.norm.beta.value().values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Generator, DefaultBackboneChannels) {
  gen::GeneratorConfig cfg;
  EXPECT_EQ(cfg.block_count(), 4);
  const auto w = gen::init_generator(cfg, 1);
  const int expected_out[] = {256, 128, 64, 32};
  ASSERT_EQ(w.blocks.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(w.blocks[i].weight.dim(0), 512 >> i);
    EXPECT_EQ(w.blocks[i].weight.dim(1), expected_out[i]);
  }
  EXPECT_EQ(w.fusion_weight.dim(0), 512 * 16);
  EXPECT_EQ(w.fusion_weight.dim(1), 228);
}

TEST(Generator, ParameterCountClosedForm) {
  for (auto head : {gen::Head::gru, gen::Head::direct}) {
    const auto cfg = small_generator(head);
    const std::size_t base = cfg.base_channels;
    std::size_t expected = 228 * base * 16 + base * 16 + 2 * base;
    std::size_t c = base;
    for (int i = 0; i < cfg.block_count(); ++i) {
      expected += c * (c / 2) * 16 + 2 * (c / 2);
      c /= 2;
    }
    if (head == gen::Head::gru) {
      expected += 3 * 9 * 3 * (c + 3);
    } else {
      expected += 9 * c * 9 + 9;
    }
    EXPECT_EQ(nn::parameter_count(gen::init_generator(cfg, 1).parameters()), expected);
  }
}

TEST(Generator, RejectsInvalidConfig) {
  auto cfg = small_generator(gen::Head::gru);
  cfg.out_size = 24;
  EXPECT_THROW(gen::init_generator(cfg, 1), ConfigError);
  cfg = small_generator(gen::Head::gru);
  cfg.base_channels = 2;  // halves to zero before reaching 16x16
  EXPECT_THROW(gen::init_generator(cfg, 1), ConfigError);
}

TEST(Generator, OutputShapeAndRange) {
  for (auto head : {gen::Head::gru, gen::Head::direct}) {
    auto w = gen::init_generator(small_generator(head), 2);
    scale_params(w.parameters(), 30.0);  // drive the output toward saturation
    nn::Rng rng(4);
    const auto z = gen::sample_noise(1, gen::kNoiseDim, rng);
    const auto frames = gen::generate(z.values(), random_embedding(1), w);
    ASSERT_EQ(frames.size(), 3u);
    for (const auto& f : frames) {
      EXPECT_EQ(f.shape(), (std::vector<int>{3, 16, 16}));
      for (Real v : f.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Generator, ModesShareOutputShape) {
  auto g = gen::init_generator(small_generator(gen::Head::gru), 1);
  auto d = gen::init_generator(small_generator(gen::Head::direct), 1);
  nn::Rng rng(1);
  const auto z = ag::constant(gen::sample_noise(2, 100, rng));
  std::mt19937_64 r2(1);
  const auto y = ag::constant(random_tensor({2, 128}, r2));
  EXPECT_EQ(gen::generate_batch(z, y, g, ag::NormMode::train).shape(),
            gen::generate_batch(z, y, d, ag::NormMode::train).shape());
}

TEST(Generator, ZeroGruHeadGivesGrayFrames) {
  auto w = gen::init_generator(small_generator(gen::Head::gru), 3);
  zero_params(w.gru->parameters("gru"));
  nn::Rng rng(2);
  const auto z = gen::sample_noise(1, 100, rng);
  for (const auto& f : gen::generate(z.values(), random_embedding(3), w))
    for (Real v : f.values()) EXPECT_EQ(v, 0.0);
}

TEST(Generator, InferenceIsBitwiseDeterministic) {
  auto w = gen::init_generator(small_generator(gen::Head::gru), 3);
  nn::Rng rng(2);
  const auto z = gen::sample_noise(1, 100, rng);
  const auto a = gen::generate(z.values(), random_embedding(3), w);
  const auto b = gen::generate(z.values(), random_embedding(3), w);
  for (int t = 0; t < 3; ++t) EXPECT_EQ(a[t], b[t]);
}

TEST(Generator, ConditionChangesOutput) {
  for (auto head : {gen::Head::gru, gen::Head::direct}) {
    auto w = gen::init_generator(small_generator(head), 6);
    nn::Rng rng(2);
    const auto z = gen::sample_noise(1, 100, rng);
    const auto a = gen::generate(z.values(), random_embedding(1), w);
    const auto b = gen::generate(z.values(), random_embedding(2), w);
    EXPECT_GT(max_abs_diff(a[0], b[0]), 0.0);
  }
}

TEST(Generator, GruFramesDifferOverTime) {
  auto w = gen::init_generator(small_generator(gen::Head::gru), 6);
  scale_params(w.gru->parameters("gru"), 20.0);
  nn::Rng rng(2);
  const auto z = gen::sample_noise(1, 100, rng);
  const auto f = gen::generate(z.values(), random_embedding(1), w);
  EXPECT_GT(max_abs_diff(f[0], f[1]), 0.0);
  EXPECT_GT(max_abs_diff(f[1], f[2]), 0.0);
}

TEST(Generator, GradientReachesInputsAndEveryBlock) {
  for (auto head : {gen::Head::gru, gen::Head::direct}) {
    auto w = gen::init_generator(small_generator(head), 8);
    nn::Rng rng(3);
    std::mt19937_64 r2(3);
    ag::Var z(gen::sample_noise(2, 100, rng), true);
    ag::Var y(random_tensor({2, 128}, r2), true);
    const auto params = w.parameters();
    nn::zero_grads(params);
    ag::backward(random_projection(gen::generate_batch(z, y, w, ag::NormMode::train), 1));
    auto nonzero = [](const Tensor& g) {
      for (Real v : g.values())
        if (v != 0.0) return true;
      return false;
    };
    EXPECT_TRUE(nonzero(z.grad()));
    EXPECT_TRUE(nonzero(y.grad()));
    for (const auto& p : params) EXPECT_TRUE(nonzero(p.var.grad())) << p.name;
  }
}

TEST(Generator, GradientsMatchFiniteDifferences) {
  for (auto head : {gen::Head::gru, gen::Head::direct}) {
    gen::GeneratorConfig cfg;
    cfg.head = head;
    cfg.noise_dim = 6;
    cfg.embedding_dim = 5;
    cfg.base_channels = 4;
    cfg.out_size = 8;
    auto w = gen::init_generator(cfg, 4);
    scale_params(w.parameters(), 25.0);
    std::mt19937_64 rng(5);
    const auto z = ag::constant(random_tensor({2, 6}, rng));
    const auto y = ag::constant(random_tensor({2, 5}, rng));
    const auto r = check_gradients(
        w.parameters(), [&] { return random_projection(gen::generate_batch(z, y, w, ag::NormMode::train_no_update), 2); },
        80, 13);
    EXPECT_GE(r.checked, 50u);
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
  }
}

// ---------------------------------------------------------- discriminator

TEST(Discriminator, DefaultArchitecture) {
  disc::DiscriminatorConfig cfg;
  EXPECT_EQ(cfg.block_count(), 4);
  const auto w = disc::init_discriminator(cfg, 1);
  const int channels[] = {64, 128, 256, 512};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(w.blocks[i].weight.dim(0), channels[i]);
    EXPECT_EQ(w.blocks[i].norm.has_value(), i != 0);
  }
  EXPECT_DOUBLE_EQ(w.config.leaky_slope, 0.2);
  EXPECT_EQ(w.gru.config.height, 4);
  EXPECT_EQ(w.gru.config.c_in, 512);
}

TEST(Discriminator, InitDeterministic) {
  const auto a = disc::init_discriminator(small_discriminator(), 3);
  const auto b = disc::init_discriminator(small_discriminator(), 3);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].var.value(), pb[i].var.value());
}

TEST(Discriminator, ParameterCountClosedForm) {
  for (const auto& cfg : {small_discriminator(), disc::DiscriminatorConfig{}}) {
    std::size_t expected = 0;
    std::size_t c_in = 3;
    for (int i = 0; i < cfg.block_count(); ++i) {
      const std::size_t c_out = static_cast<std::size_t>(cfg.base_channels) << i;
      expected += c_out * c_in * 16 + (i == 0 ? 0 : 2 * c_out);
      c_in = c_out;
    }
    const std::size_t g = cfg.gru_channels, k = cfg.gru_kernel;
    expected += 3 * k * k * g * (c_in + g);
    expected += g * (g + 128) * 9 + g;
    expected += g + 1;
    EXPECT_EQ(nn::parameter_count(disc::init_discriminator(cfg, 1).parameters()), expected);
  }
}

TEST(Discriminator, ZeroWeightsGiveHalf) {
  auto w = disc::init_discriminator(small_discriminator(), 3);
  zero_params(w.parameters());
  std::mt19937_64 rng(1);
  const auto f = random_frames(16, rng);
  EXPECT_EQ(disc::discriminate(f, random_embedding(1), w), 0.5);
}

TEST(Discriminator, ScoreStrictlyInsideUnitInterval) {
  auto w = disc::init_discriminator(small_discriminator(), 3);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const Real p = disc::discriminate(random_frames(16, rng), random_embedding(i), w);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Discriminator, OrderAndConditionSensitivity) {
  auto w = disc::init_discriminator(small_discriminator(), 4);
  std::mt19937_64 rng(3);
  const auto f = random_frames(16, rng);
  const std::vector<Tensor> reversed{f[2], f[1], f[0]};
  const auto y = random_embedding(5);
  EXPECT_NE(disc::discriminate(f, y, w), disc::discriminate(reversed, y, w));
  EXPECT_NE(disc::discriminate(f, y, w), disc::discriminate(f, random_embedding(6), w));
}

TEST(Discriminator, RejectsBadInput) {
  auto w = disc::init_discriminator(small_discriminator(), 4);
  std::mt19937_64 rng(3);
  auto f = random_frames(16, rng);
  f.pop_back();
  EXPECT_THROW(disc::discriminate(f, random_embedding(1), w), ConfigError);
  EXPECT_THROW(disc::discriminate(random_frames(32, rng), random_embedding(1), w), ConfigError);
}

TEST(Discriminator, GradientsMatchFiniteDifferences) {
  auto cfg = small_discriminator();
  cfg.embedding_dim = 5;
  auto w = disc::init_discriminator(cfg, 6);
  scale_params(w.parameters(), 25.0);
  std::mt19937_64 rng(7);
  const auto x = ag::constant(random_tensor({2, 9, 16, 16}, rng));
  const auto y = ag::constant(random_tensor({2, 5}, rng));
  const auto r = check_gradients(
      w.parameters(),
      [&] { return ag::sum(disc::discriminate_batch(x, y, w, ag::NormMode::train_no_update)); }, 80, 17);
  EXPECT_GE(r.checked, 50u);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}
