#include "tavg/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "byte_io.hpp"
#include "tavg/errors.hpp"

namespace tavg::train {
namespace {

constexpr char kMagic[] = "TAVG";
constexpr char kVersion = '1';

// Distinct, well-mixed seeds for the sub-networks and the batch generator.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Real mean_of(const Tensor& t) {
  Real s = 0;
  for (Real v : t.values()) s += v;
  return t.size() ? s / static_cast<Real>(t.size()) : 0.0;
}

void require_finite(Real value, const char* what, long iteration) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration));
  }
}

std::vector<ag::BatchNormBuffers*> all_buffers(Model& m) {
  auto g = m.generator.norm_buffers();
  auto d = m.discriminator.norm_buffers();
  g.insert(g.end(), d.begin(), d.end());
  return g;
}

void check_unique(const nn::ParamList& params) {
  std::set<std::string> names;
  for (const auto& p : params)
    if (!names.insert(p.name).second) throw Error("duplicate parameter name " + p.name);
}

void put_tensor(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape()) w.i32(d);
  for (Real v : t.values()) w.f64(v);
}

std::vector<std::pair<std::string, Tensor*>> state_tensors(TrainState& s) {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_params = [&](const nn::ParamList& params) {
    for (const auto& p : params) {
      ag::Var v = p.var;
      out.emplace_back(p.name, &v.mutable_value());
    }
  };
  add_params(s.model.generator_parameters());
  add_params(s.model.discriminator_parameters());
  const auto buffers = all_buffers(s.model);
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    out.emplace_back("norm" + std::to_string(i) + ".running_mean", &buffers[i]->running_mean);
    out.emplace_back("norm" + std::to_string(i) + ".running_var", &buffers[i]->running_var);
  }
  auto add_adam = [&](Adam& opt, const std::string& prefix) {
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
      out.emplace_back(prefix + ".m." + opt.params()[i].name, &opt.first_moments()[i]);
      out.emplace_back(prefix + ".v." + opt.params()[i].name, &opt.second_moments()[i]);
    }
  };
  add_adam(s.opt_d, "adam_d");
  add_adam(s.opt_g, "adam_g");
  return out;
}

Tensor downsample(const data::FaceImage& img, int image_size) {
  if (img.size % image_size != 0) {
    throw ConfigError("crop size " + std::to_string(img.size) + " is not a multiple of image_size " +
                      std::to_string(image_size));
  }
  const int f = img.size / image_size;
  Tensor t({3, image_size, image_size});
  const Real inv = 1.0 / (f * f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        Real acc = 0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += img.value(c, y * f + dy, x * f + dx);
        t[(static_cast<std::size_t>(c) * image_size + y) * image_size + x] = acc * inv;
      }
  return t;
}

std::vector<const data::Sample*> draw_batch(const data::Dataset& dataset, int batch_size, nn::Rng& rng) {
  const std::size_t n = dataset.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), n);
  // Partial Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(order[i], order[j]);
  }
  std::vector<const data::Sample*> batch;
  for (std::size_t i = 0; i < take; ++i) batch.push_back(&dataset.samples[order[i]]);
  return batch;
}

Tensor draw_noise(int n, int dim, nn::Rng& rng) {
  // Box-Muller on raw 64-bit draws keeps the stream identical across standard libraries.
  Tensor t({n, dim});
  constexpr Real kTwoPi = 6.283185307179586476925;
  for (std::size_t i = 0; i < t.size(); i += 2) {
    const Real u1 = (static_cast<Real>(rng() >> 11) + 1.0) * 0x1.0p-53;
    const Real u2 = static_cast<Real>(rng() >> 11) * 0x1.0p-53;
    const Real r = std::sqrt(-2.0 * std::log(u1));
    t[i] = r * std::cos(kTwoPi * u2);
    if (i + 1 < t.size()) t[i + 1] = r * std::sin(kTwoPi * u2);
  }
  return t;
}

}  // namespace

Real d_loss(std::span<const Real> real, std::span<const Real> fake) {
  if (real.empty() || fake.empty()) throw ConfigError("d_loss: empty score list");
  Real a = 0, b = 0;
  for (Real p : real) a += std::log(std::clamp(p, kProbFloor, 1.0 - kProbFloor));
  for (Real p : fake) b += std::log(1.0 - std::clamp(p, kProbFloor, 1.0 - kProbFloor));
  return -a / static_cast<Real>(real.size()) - b / static_cast<Real>(fake.size());
}

Real g_loss(std::span<const Real> fake) {
  if (fake.empty()) throw ConfigError("g_loss: empty score list");
  Real a = 0;
  for (Real p : fake) a += std::log(std::clamp(p, kProbFloor, 1.0 - kProbFloor));
  return -a / static_cast<Real>(fake.size());
}

ag::Var d_loss(const ag::Var& p_real, const ag::Var& p_fake) {
  const auto real = ag::mean(ag::log(ag::clamp(p_real, kProbFloor, 1.0 - kProbFloor)));
  const auto fake = ag::mean(ag::log(ag::one_minus(ag::clamp(p_fake, kProbFloor, 1.0 - kProbFloor))));
  return ag::scale(ag::add(real, fake), -1.0);
}

ag::Var g_loss(const ag::Var& p_fake) {
  return ag::scale(ag::mean(ag::log(ag::clamp(p_fake, kProbFloor, 1.0 - kProbFloor))), -1.0);
}

nn::ParamList Model::generator_parameters() const {
  auto out = encoder.parameters();
  for (auto& p : generator.parameters()) out.push_back(std::move(p));
  return out;
}

nn::ParamList Model::discriminator_parameters() const { return discriminator.parameters(); }

Model init_model(const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  Model m{config, audio::init_encoder(config.encoder_config(), derive_seed(seed, 0)),
          gen::init_generator(config.generator_config(), derive_seed(seed, 1)),
          disc::init_discriminator(config.discriminator_config(), derive_seed(seed, 2))};
  check_unique(m.generator_parameters());
  check_unique(m.discriminator_parameters());
  return m;
}

Adam::Adam(nn::ParamList params, Real lr, Real beta1, Real beta2, Real eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros_like(p.var.value()));
    v_.push_back(Tensor::zeros_like(p.var.value()));
  }
}

void Adam::step() {
  ++t_;
  const Real c1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Var var = params_[i].var;
    const Tensor g = var.grad();
    Tensor& w = var.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

TrainState init_state(const TrainConfig& config) {
  TrainState s;
  s.model = init_model(config, config.seed);
  s.opt_d = Adam(s.model.discriminator_parameters(), config.lr_d, config.beta1, config.beta2, config.adam_eps);
  s.opt_g = Adam(s.model.generator_parameters(), config.lr_g, config.beta1, config.beta2, config.adam_eps);
  s.seed = config.seed;
  s.rng.seed(derive_seed(config.seed, 3));
  return s;
}

Tensor stack_frames(const std::vector<const data::Sample*>& samples, int image_size) {
  if (samples.empty()) throw ConfigError("empty batch");
  const int frames = static_cast<int>(samples.front()->frames.size());
  Tensor out({static_cast<int>(samples.size()), 3 * frames, image_size, image_size});
  const std::size_t per_frame = static_cast<std::size_t>(3) * image_size * image_size;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if (static_cast<int>(samples[n]->frames.size()) != frames) throw DataError("samples disagree on frame count");
    for (int t = 0; t < frames; ++t) {
      const Tensor f = downsample(samples[n]->frames[static_cast<std::size_t>(t)], image_size);
      std::copy(f.data(), f.data() + per_frame, out.data() + (n * frames + t) * per_frame);
    }
  }
  return out;
}

Tensor stack_audio(const std::vector<const data::Sample*>& samples) {
  if (samples.empty()) throw ConfigError("empty batch");
  const int len = static_cast<int>(samples.front()->audio.size());
  Tensor out({static_cast<int>(samples.size()), len});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if (static_cast<int>(samples[n]->audio.size()) != len) throw DataError("samples disagree on audio length");
    std::copy(samples[n]->audio.begin(), samples[n]->audio.end(), out.data() + n * static_cast<std::size_t>(len));
  }
  return out;
}

DiscriminatorStep update_discriminator(const Batch& batch, TrainState& state) {
  auto& m = state.model;
  const auto y = ag::detach(audio::encode_batch(ag::constant(batch.audio), m.encoder));
  const auto fake =
      ag::detach(gen::generate_batch(ag::constant(batch.noise), y, m.generator, ag::NormMode::train_no_update));
  const auto p_real = disc::discriminate_batch(ag::constant(batch.frames), y, m.discriminator, ag::NormMode::train);
  const auto p_fake = disc::discriminate_batch(fake, y, m.discriminator, ag::NormMode::train);
  const auto loss = d_loss(p_real, p_fake);
  require_finite(loss.value()[0], "discriminator loss", state.iteration);
  const auto params = m.discriminator_parameters();
  nn::zero_grads(params);
  ag::backward(loss);
  state.opt_d.step();
  nn::zero_grads(params);
  nn::zero_grads(m.generator_parameters());
  return {loss.value()[0], mean_of(p_real.value()), mean_of(p_fake.value())};
}

Real update_generator(const Batch& batch, TrainState& state) {
  auto& m = state.model;
  const auto y = audio::encode_batch(ag::constant(batch.audio), m.encoder);
  const auto fake = gen::generate_batch(ag::constant(batch.noise), y, m.generator, ag::NormMode::train);
  const auto p_fake = disc::discriminate_batch(fake, ag::detach(y), m.discriminator, ag::NormMode::train_no_update);
  const auto loss = g_loss(p_fake);
  require_finite(loss.value()[0], "generator loss", state.iteration);
  const auto params = m.generator_parameters();
  nn::zero_grads(params);
  ag::backward(loss);
  state.opt_g.step();
  nn::zero_grads(params);
  nn::zero_grads(m.discriminator_parameters());
  return loss.value()[0];
}

LossRecord train_step(const std::vector<const data::Sample*>& samples, TrainState& state) {
  const auto& cfg = state.model.config;
  Batch batch;
  batch.audio = stack_audio(samples);
  if (batch.audio.dim(1) != cfg.encoder_config().input_length) {
    throw DataError("sample audio length " + std::to_string(batch.audio.dim(1)) + " does not match mode " +
                    to_string(cfg.mode));
  }
  batch.frames = stack_frames(samples, cfg.image_size);
  if (batch.frames.dim(1) != 3 * cfg.frames()) throw DataError("sample frame count does not match mode " + to_string(cfg.mode));
  batch.noise = draw_noise(static_cast<int>(samples.size()), gen::kNoiseDim, state.rng);

  const auto d = update_discriminator(batch, state);
  const Real g = update_generator(batch, state);
  ++state.iteration;
  return {state.iteration, d.loss, g, d.real_mean, d.fake_mean};
}

void train_more(TrainState& state, const data::Dataset& dataset, const TrainHooks& hooks) {
  const auto& cfg = state.model.config;
  if (dataset.manifest.mode != cfg.dataset_mode()) {
    throw ConfigError("dataset mode " + data::to_string(dataset.manifest.mode) + " does not match training mode " +
                      to_string(cfg.mode));
  }
  if (dataset.samples.empty()) throw DataError("empty dataset");
  if (dataset.manifest.image_size % cfg.image_size != 0) {
    throw ConfigError("dataset image_size " + std::to_string(dataset.manifest.image_size) +
                      " is not a multiple of model image_size " + std::to_string(cfg.image_size));
  }

  std::ofstream log;
  if (hooks.losses) {
    const bool fresh = state.iteration == 0 || !std::filesystem::exists(*hooks.losses);
    media::ensure_parent(*hooks.losses);
    log.open(*hooks.losses, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError("cannot write loss log " + hooks.losses->string());
    if (fresh) log << "iteration\td_loss\tg_loss\td_real_mean\td_fake_mean\n";
  }
  while (state.iteration < cfg.iterations) {
    const auto batch = draw_batch(dataset, cfg.batch_size, state.rng);
    const auto rec = train_step(batch, state);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "%ld\t%.9g\t%.9g\t%.9g\t%.9g\n", rec.iteration, rec.d_loss, rec.g_loss,
                    rec.d_real_mean, rec.d_fake_mean);
      log << line;
    }
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.checkpoint && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.iterations) {
      log.flush();
      save_checkpoint(state, *hooks.checkpoint);
    }
  }
  if (hooks.checkpoint) save_checkpoint(state, *hooks.checkpoint);
}

TrainState train(const TrainConfig& config, const data::Dataset& dataset, const TrainHooks& hooks) {
  TrainState state = init_state(config);
  train_more(state, dataset, hooks);
  return state;
}

void save_checkpoint(const TrainState& const_state, const std::filesystem::path& path) {
  // Serialization only reads, but the tensor table hands out mutable pointers.
  auto& state = const_cast<TrainState&>(const_state);
  detail::ByteWriter payload;
  payload.str(state.model.config.to_text());
  payload.u64(static_cast<std::uint64_t>(state.iteration));
  payload.u64(state.seed);
  std::ostringstream rng;
  rng << state.rng;
  payload.str(rng.str());
  payload.u64(state.opt_d.steps());
  payload.u64(state.opt_g.steps());
  const auto tensors = state_tensors(state);
  payload.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) put_tensor(payload, name, *t);

  detail::ByteWriter file;
  file.tag(kMagic);
  file.u8(static_cast<std::uint8_t>(kVersion));
  file.u64(payload.size());
  file.raw(payload.bytes().data(), payload.size());
  file.u32(static_cast<std::uint32_t>(::crc32(0, payload.bytes().data(), static_cast<uInt>(payload.size()))));
  const auto tmp = path.string() + ".tmp";
  media::write_file(tmp, file.bytes());
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, std::optional<ModelMode> expected_mode) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const auto bytes = media::read_file(path);
  const std::string ctx = "checkpoint " + path.string();
  detail::ByteReader r(bytes.data(), bytes.size(), ctx);
  if (bytes.size() < 5 || r.tag(4) != kMagic) throw DataError(ctx + ": not a checkpoint file");
  const char version = static_cast<char>(r.u8());
  if (version != kVersion) {
    throw DataError(ctx + ": unsupported checkpoint version TAVG" + std::string(1, version) + " (expected TAVG1)");
  }
  const std::uint64_t len = r.u64();
  if (len + 4 != r.remaining()) throw DataError(ctx + ": corrupt (length mismatch)");
  const std::uint8_t* body = r.take(static_cast<std::size_t>(len));
  const std::uint32_t crc = r.u32();
  if (crc != static_cast<std::uint32_t>(::crc32(0, body, static_cast<uInt>(len)))) {
    throw DataError(ctx + ": corrupt (checksum mismatch)");
  }

  detail::ByteReader p(body, static_cast<std::size_t>(len), ctx);
  TrainConfig config;
  try {
    config = TrainConfig::parse(p.str(), ctx);
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint config: ") + e.what());
  }
  if (expected_mode && *expected_mode != config.mode) {
    throw ConfigError(ctx + " holds a " + to_string(config.mode) + " model, expected " + to_string(*expected_mode));
  }
  TrainState state = init_state(config);
  state.iteration = static_cast<long>(p.u64());
  state.seed = p.u64();
  std::istringstream rng(p.str());
  rng >> state.rng;
  if (!rng) throw DataError(ctx + ": corrupt generator state");
  state.opt_d.set_steps(p.u64());
  state.opt_g.set_steps(p.u64());

  std::map<std::string, Tensor*> table;
  for (const auto& [name, t] : state_tensors(state)) table[name] = t;
  const std::uint32_t count = p.u32();
  if (count != table.size()) throw DataError(ctx + ": tensor count does not match the model configuration");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = p.str();
    const auto it = table.find(name);
    if (it == table.end()) throw DataError(ctx + ": unexpected tensor " + name);
    const std::uint32_t rank = p.u32();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = p.i32();
    if (shape != it->second->shape()) throw DataError(ctx + ": tensor " + name + " has the wrong shape");
    for (auto& v : it->second->values()) v = p.f64();
    table.erase(it);
  }
  if (!p.done()) throw DataError(ctx + ": trailing data");
  return state;
}

}  // namespace tavg::train
