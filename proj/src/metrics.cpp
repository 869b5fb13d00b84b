#include "tavg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "byte_io.hpp"
#include "tavg/errors.hpp"
#include "tavg/ops.hpp"

namespace tavg::metrics {
namespace {

// Views a [C,H,W] or [H,W] tensor as (channels, height, width).
struct Planes {
  int c, h, w;
};

Planes planes_of(const Tensor& t) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw ConfigError("image must be [C, H, W] or [H, W], got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

std::vector<Real> gaussian_window(int size, Real sigma) {
  std::vector<Real> g(static_cast<std::size_t>(size) * size);
  const Real c = (size - 1) / 2.0;
  Real total = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Real v = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2 * sigma * sigma));
      g[static_cast<std::size_t>(y) * size + x] = v;
      total += v;
    }
  for (auto& v : g) v /= total;
  return g;
}

// Mean of values summed in sorted order, so the result does not depend on
// the order the samples were visited.
Real ordered_mean(std::vector<Real> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  Real s = 0;
  for (Real v : values) s += v;
  return s / static_cast<Real>(values.size());
}

Tensor frame_of(const Tensor& stacked, int n, int t) {
  const int s = stacked.dim(2);
  const std::size_t per = static_cast<std::size_t>(3) * s * s;
  Tensor out({3, s, s});
  const std::size_t offset = (static_cast<std::size_t>(n) * (stacked.dim(1) / 3) + t) * per;
  std::copy(stacked.data() + offset, stacked.data() + offset + per, out.data());
  return out;
}

void write_grid(const std::filesystem::path& path, const std::vector<std::vector<Tensor>>& truth,
                const std::vector<std::vector<Tensor>>& generated) {
  if (truth.empty()) return;
  const int frames = static_cast<int>(truth.front().size());
  const int s = truth.front().front().dim(1);
  const int gap = 4;
  const int width = 2 * frames * s + gap;
  media::RgbFrame grid(width, static_cast<int>(truth.size()) * s);
  std::fill(grid.rgb.begin(), grid.rgb.end(), 255);
  auto blit = [&](const Tensor& img, int x0, int y0) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          grid.at(x0 + x, y0 + y, c) = data::FaceImage::to_level(img[(static_cast<std::size_t>(c) * s + y) * s + x]);
  };
  for (std::size_t r = 0; r < truth.size(); ++r)
    for (int t = 0; t < frames; ++t) {
      blit(truth[r][t], t * s, static_cast<int>(r) * s);
      blit(generated[r][t], frames * s + gap + t * s, static_cast<int>(r) * s);
    }
  media::write_png(path, grid);
}

std::string format_row(const std::vector<std::string>& cols) {
  std::string line;
  for (std::size_t i = 0; i < cols.size(); ++i) line += (i ? "\t" : "") + cols[i];
  return line + "\n";
}

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Real mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ConfigError("mse: empty image");
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Real d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<Real>(a.size());
}

void SsimParams::validate() const {
  if (window <= 0 || !(sigma > 0)) throw ConfigError("ssim: window and sigma must be positive");
  if (!(k1 > 0) || !(k2 > 0)) throw ConfigError("ssim: K1 and K2 must be positive");
  if (!(dynamic_range > 0)) throw ConfigError("ssim: dynamic range must be positive");
}

Real ssim(const Tensor& a, const Tensor& b, const SsimParams& p) {
  require_same_shape(a, b, "ssim");
  p.validate();
  const auto [channels, h, w] = planes_of(a);
  if (h < p.window || w < p.window) {
    throw ConfigError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                      std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
  }
  const auto g = gaussian_window(p.window, p.sigma);
  const Real c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const Real c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const int oh = h - p.window + 1, ow = w - p.window + 1;
  Real channel_sum = 0;
  for (int c = 0; c < channels; ++c) {
    const Real* pa = a.data() + static_cast<std::size_t>(c) * h * w;
    const Real* pb = b.data() + static_cast<std::size_t>(c) * h * w;
    Real map_sum = 0;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        Real ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < p.window; ++dy)
          for (int dx = 0; dx < p.window; ++dx) {
            const Real wgt = g[static_cast<std::size_t>(dy) * p.window + dx];
            const std::size_t i = static_cast<std::size_t>(y + dy) * w + (x + dx);
            ma += wgt * pa[i];
            mb += wgt * pb[i];
            saa += wgt * pa[i] * pa[i];
            sbb += wgt * pb[i] * pb[i];
            sab += wgt * pa[i] * pb[i];
          }
        const Real va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        map_sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    channel_sum += map_sum / (static_cast<Real>(oh) * ow);
  }
  return channel_sum / channels;
}

ConvFeatureExtractor::ConvFeatureExtractor(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("feature extractor needs at least one layer");
  int c_in = 3;
  for (const auto& l : layers_) {
    if (l.weight.rank() != 4 || l.weight.dim(1) != c_in || l.weight.dim(2) != l.weight.dim(3) ||
        l.weight.dim(2) % 2 == 0 || l.bias.shape() != std::vector<int>{l.weight.dim(0)} || l.stride <= 0) {
      throw ConfigError("feature extractor layers are inconsistent");
    }
    c_in = l.weight.dim(0);
  }
}

ConvFeatureExtractor ConvFeatureExtractor::random(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  const int widths[] = {8, 16, 32}, strides[] = {1, 2, 2};
  int c_in = 3;
  for (int i = 0; i < 3; ++i) {
    Layer l{Tensor({widths[i], c_in, 3, 3}), Tensor({widths[i]}), strides[i]};
    std::normal_distribution<Real> d(0.0, std::sqrt(2.0 / (c_in * 9)));
    for (auto& v : l.weight.values()) v = d(rng);
    layers.push_back(std::move(l));
    c_in = widths[i];
  }
  return ConvFeatureExtractor(std::move(layers));
}

ConvFeatureExtractor ConvFeatureExtractor::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("feature weights not found: " + path.string());
  const auto bytes = media::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size(), path.string());
  if (bytes.size() < 4 || r.tag(4) != "LPW1") throw DataError(path.string() + ": not an LPW1 weight file");
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) throw DataError(path.string() + ": implausible layer count");
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto out = static_cast<int>(r.u32()), in = static_cast<int>(r.u32()), k = static_cast<int>(r.u32());
    const auto stride = static_cast<int>(r.u32());
    if (out <= 0 || in <= 0 || k <= 0 || out > 4096 || in > 4096 || k > 15) {
      throw DataError(path.string() + ": implausible layer shape");
    }
    Layer l{Tensor({out, in, k, k}), Tensor({out}), stride};
    for (auto& v : l.weight.values()) v = r.f64();
    for (auto& v : l.bias.values()) v = r.f64();
    layers.push_back(std::move(l));
  }
  if (!r.done()) throw DataError(path.string() + ": trailing data");
  try {
    return ConvFeatureExtractor(std::move(layers));
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void ConvFeatureExtractor::save(const std::filesystem::path& path) const {
  detail::ByteWriter w;
  w.tag("LPW1");
  w.u32(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    w.u32(static_cast<std::uint32_t>(l.weight.dim(0)));
    w.u32(static_cast<std::uint32_t>(l.weight.dim(1)));
    w.u32(static_cast<std::uint32_t>(l.weight.dim(2)));
    w.u32(static_cast<std::uint32_t>(l.stride));
    for (Real v : l.weight.values()) w.f64(v);
    for (Real v : l.bias.values()) w.f64(v);
  }
  media::write_file(path, w.bytes());
}

std::vector<Tensor> ConvFeatureExtractor::features(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ConfigError("feature extractor expects a [3, H, W] image, got " + shape_string(image.shape()));
  }
  std::vector<Tensor> out;
  ag::Var x = ag::constant(image.reshaped({1, 3, image.dim(1), image.dim(2)}));
  for (const auto& l : layers_) {
    const int k = l.weight.dim(2);
    x = ag::relu(ag::conv2d(x, ag::constant(l.weight), ag::constant(l.bias),
                            ag::ConvGeometry::square(k, l.stride, k / 2)));
    const auto& v = x.value();
    out.push_back(v.reshaped({v.dim(1), v.dim(2), v.dim(3)}));
  }
  return out;
}

Real lpips(const Tensor& a, const Tensor& b, const FeatureExtractor& extractor) {
  require_same_shape(a, b, "lpips");
  std::vector<Tensor> fa, fb;
  try {
    fa = extractor.features(a);
    fb = extractor.features(b);
  } catch (const std::exception& e) {
    throw Error(std::string("lpips: feature extractor failed: ") + e.what());
  }
  if (fa.size() != fb.size() || fa.empty()) throw Error("lpips: feature extractor returned inconsistent layers");
  constexpr Real kEps = 1e-10;
  Real total = 0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    require_same_shape(fa[l], fb[l], "lpips features");
    const auto [c, h, w] = planes_of(fa[l]);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Real layer = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      Real na = 0, nb = 0;
      for (int ch = 0; ch < c; ++ch) {
        na += fa[l][ch * plane + i] * fa[l][ch * plane + i];
        nb += fb[l][ch * plane + i] * fb[l][ch * plane + i];
      }
      na = std::sqrt(na) + kEps;
      nb = std::sqrt(nb) + kEps;
      for (int ch = 0; ch < c; ++ch) {
        const Real d = fa[l][ch * plane + i] / na - fb[l][ch * plane + i] / nb;
        layer += d * d;
      }
    }
    total += layer / static_cast<Real>(fa[l].size());
  }
  return total;
}

Tensor evaluation_noise(std::uint64_t seed, int index, int dim) {
  nn::Rng rng(seed * 0x100000001B3ull + static_cast<std::uint64_t>(index) + 1);
  return gen::sample_noise(1, dim, rng);
}

namespace {

struct Scores {
  std::vector<Real> mse, ssim, lpips, temporal, reference_temporal;
  std::size_t frames = 0;
};

ConditionRow summarize(const std::string& name, Scores s, std::size_t samples) {
  ConditionRow row;
  row.condition = name;
  row.samples = samples;
  row.frames = s.frames;
  row.mse = ordered_mean(std::move(s.mse));
  row.ssim = ordered_mean(std::move(s.ssim));
  row.lpips = ordered_mean(std::move(s.lpips));
  row.temporal_mse = ordered_mean(std::move(s.temporal));
  row.reference_temporal_mse = ordered_mean(std::move(s.reference_temporal));
  return row;
}

void score_sample(const std::vector<Tensor>& truth, const std::vector<Tensor>& made, const EvalOptions& o,
                  const FeatureExtractor& fx, Scores& s) {
  for (std::size_t t = 0; t < truth.size(); ++t) {
    s.mse.push_back(mse(made[t], truth[t]));
    s.ssim.push_back(ssim(made[t], truth[t], o.ssim));
    s.lpips.push_back(lpips(made[t], truth[t], fx));
    ++s.frames;
    if (t > 0) {
      s.temporal.push_back(mse(made[t], made[t - 1]));
      s.reference_temporal.push_back(mse(truth[t], truth[t - 1]));
    }
  }
}

std::vector<Tensor> truth_frames(const data::Sample& sample, int image_size) {
  const auto stacked = train::stack_frames({&sample}, image_size);
  std::vector<Tensor> out;
  for (int t = 0; t < stacked.dim(1) / 3; ++t) out.push_back(frame_of(stacked, 0, t));
  return out;
}

}  // namespace

ConditionRow evaluate_condition(const std::string& name, train::TrainState& state, const data::Dataset& dataset,
                                const EvalOptions& options) {
  if (dataset.samples.empty()) throw DataError("empty evaluation set");
  const auto& cfg = state.model.config;
  if (dataset.manifest.mode != cfg.dataset_mode()) {
    throw ConfigError("condition " + name + ": dataset mode " + data::to_string(dataset.manifest.mode) +
                      " does not match model mode " + train::to_string(cfg.mode));
  }
  std::optional<ConvFeatureExtractor> fallback;
  if (!options.extractor) fallback = ConvFeatureExtractor::random(0);
  const FeatureExtractor& fx = options.extractor ? *options.extractor : *fallback;
  Scores scores;
  std::vector<std::vector<Tensor>> grid_truth, grid_made;
  for (const auto& sample : dataset.samples) {
    const auto truth = truth_frames(sample, cfg.image_size);
    const auto y = audio::encode(sample.audio, state.model.encoder);
    const auto z = evaluation_noise(options.seed, sample.index, gen::kNoiseDim);
    const auto made = gen::generate(z.values(), y, state.model.generator);
    score_sample(truth, made, options, fx, scores);
    if (options.grid_dir && static_cast<int>(grid_truth.size()) < options.grid_samples) {
      grid_truth.push_back(truth);
      grid_made.push_back(made);
    }
  }
  if (options.grid_dir) {
    std::filesystem::create_directories(*options.grid_dir);
    write_grid(*options.grid_dir / (name + ".png"), grid_truth, grid_made);
  }
  return summarize(name, std::move(scores), dataset.samples.size());
}

ConditionRow ground_truth_row(const data::Dataset& dataset, int image_size, const EvalOptions& options) {
  if (dataset.samples.empty()) throw DataError("empty evaluation set");
  std::optional<ConvFeatureExtractor> fallback;
  if (!options.extractor) fallback = ConvFeatureExtractor::random(0);
  const FeatureExtractor& fx = options.extractor ? *options.extractor : *fallback;
  Scores scores;
  for (const auto& sample : dataset.samples) {
    const auto truth = truth_frames(sample, image_size);
    score_sample(truth, truth, options, fx, scores);
  }
  return summarize("ground_truth", std::move(scores), dataset.samples.size());
}

Report evaluate(const std::vector<std::pair<std::string, std::filesystem::path>>& checkpoints,
                const data::Dataset& triplet_set, const data::Dataset* baseline_set, const EvalOptions& options) {
  if (checkpoints.empty()) throw ConfigError("no checkpoints to evaluate");
  Report report;
  for (const auto& [name, path] : checkpoints) {
    if (!std::filesystem::exists(path)) throw DataError("checkpoint for condition " + name + " not found: " + path.string());
    auto state = train::load_checkpoint(path);
    const data::Dataset* ds = &triplet_set;
    if (state.model.config.mode == train::ModelMode::baseline) {
      if (!baseline_set) throw ConfigError("condition " + name + " is a baseline model; a baseline dataset is required");
      ds = baseline_set;
    }
    report.rows.push_back(evaluate_condition(name, state, *ds, options));
  }
  return report;
}

void Report::write(const std::filesystem::path& path) const {
  media::ensure_parent(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report " + path.string());
  out << format_row({"condition", "MSE", "SSIM", "LPIPS"});
  for (const auto& r : rows) out << format_row({r.condition, fmt(r.mse), fmt(r.ssim), fmt(r.lpips)});
}

void Report::write_details(const std::filesystem::path& path) const {
  media::ensure_parent(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report " + path.string());
  out << format_row({"condition", "MSE", "SSIM", "LPIPS", "temporal_MSE", "reference_temporal_MSE", "samples", "frames"});
  for (const auto& r : rows) {
    out << format_row({r.condition, fmt(r.mse), fmt(r.ssim), fmt(r.lpips), fmt(r.temporal_mse),
                       fmt(r.reference_temporal_mse), std::to_string(r.samples), std::to_string(r.frames)});
  }
}

}  // namespace tavg::metrics
