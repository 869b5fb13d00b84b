#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tavg/config.hpp"
#include "tavg/dataset.hpp"

namespace tavg::train {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before logs.
inline constexpr Real kProbFloor = 1e-7;

/// -mean(log p_real) - mean(log(1 - p_fake)).
Real d_loss(std::span<const Real> real, std::span<const Real> fake);
/// Non-saturating generator loss -mean(log p_fake).
Real g_loss(std::span<const Real> fake);
ag::Var d_loss(const ag::Var& p_real, const ag::Var& p_fake);
ag::Var g_loss(const ag::Var& p_fake);

struct Model {
  TrainConfig config;
  audio::EncoderWeights encoder;
  gen::GeneratorWeights generator;
  disc::DiscriminatorWeights discriminator;

  /// Encoder and generator: the parameters moved by the generator update.
  nn::ParamList generator_parameters() const;
  nn::ParamList discriminator_parameters() const;
};

Model init_model(const TrainConfig& config, std::uint64_t seed);

class Adam {
 public:
  Adam() = default;
  Adam(nn::ParamList params, Real lr, Real beta1, Real beta2, Real eps);
  void step();

  const nn::ParamList& params() const { return params_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  nn::ParamList params_;
  std::vector<Tensor> m_, v_;
  Real lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
  std::uint64_t t_ = 0;
};

struct TrainState {
  Model model;
  Adam opt_d;
  Adam opt_g;
  long iteration = 0;
  std::uint64_t seed = 0;
  nn::Rng rng;
};

TrainState init_state(const TrainConfig& config);

struct LossRecord {
  long iteration = 0;
  Real d_loss = 0;
  Real g_loss = 0;
  Real d_real_mean = 0;
  Real d_fake_mean = 0;
};

/// Model-ready tensors for a minibatch.
struct Batch {
  Tensor audio;   // [N, samples]
  Tensor frames;  // [N, 3 * frames, S, S]
  Tensor noise;   // [N, noise_dim]
};

/// Stacks samples, box-averaging crops down to `image_size`.
Tensor stack_frames(const std::vector<const data::Sample*>& samples, int image_size);
Tensor stack_audio(const std::vector<const data::Sample*>& samples);

struct DiscriminatorStep {
  Real loss = 0;
  Real real_mean = 0;
  Real fake_mean = 0;
};

/// One discriminator update on real frames and detached fakes. Generator and
/// encoder weights and statistics are left untouched.
DiscriminatorStep update_discriminator(const Batch& batch, TrainState& state);
/// One generator update through a frozen discriminator; moves the encoder and
/// generator only. Returns the generator loss.
Real update_generator(const Batch& batch, TrainState& state);

/// D update then G update with noise drawn from the state's generator.
/// Throws NumericError on a non-finite loss.
LossRecord train_step(const std::vector<const data::Sample*>& samples, TrainState& state);

struct TrainHooks {
  std::optional<std::filesystem::path> checkpoint;  // final and periodic checkpoints
  std::optional<std::filesystem::path> losses;      // losses.tsv
  std::function<void(const LossRecord&)> on_step;
};

/// Runs config.iterations steps on seeded shuffled minibatches.
TrainState train(const TrainConfig& config, const data::Dataset& dataset, const TrainHooks& hooks = {});
/// Continues from an existing state until config.iterations is reached.
void train_more(TrainState& state, const data::Dataset& dataset, const TrainHooks& hooks = {});

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Throws DataError on corruption or version mismatch and ConfigError when
/// `expected_mode` is given and differs.
TrainState load_checkpoint(const std::filesystem::path& path, std::optional<ModelMode> expected_mode = std::nullopt);

}  // namespace tavg::train
