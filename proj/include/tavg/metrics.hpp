#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tavg/dataset.hpp"
#include "tavg/trainer.hpp"

namespace tavg::metrics {

/// Images are [C, H, W] (or [H, W]) tensors with values in [-1, 1].
Real mse(const Tensor& a, const Tensor& b);

struct SsimParams {
  int window = 11;
  Real sigma = 1.5;
  Real k1 = 0.01;
  Real k2 = 0.03;
  Real dynamic_range = 2.0;

  void validate() const;
};

/// Gaussian-windowed SSIM over all valid window positions, averaged over
/// channels.
Real ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// Feature maps [C_l, H_l, W_l] for one [3, H, W] image.
  virtual std::vector<Tensor> features(const Tensor& image) const = 0;
};

/// Plain conv + ReLU stack (3x3 kernels, padding 1).
///
/// The default instance uses fixed seeded random weights; it is a perceptual
/// proxy in the style of LPIPS, not the reference network. Pretrained weights
/// can be supplied in the LPW1 format:
///
///   "LPW1", u32 layer_count, then per layer
///   u32 out_channels, u32 in_channels, u32 kernel, u32 stride,
///   f64 weight[out][in][kernel][kernel], f64 bias[out]   (all little-endian)
class ConvFeatureExtractor final : public FeatureExtractor {
 public:
  struct Layer {
    Tensor weight;  // [out, in, k, k]
    Tensor bias;    // [out]
    int stride = 1;
  };

  explicit ConvFeatureExtractor(std::vector<Layer> layers);
  static ConvFeatureExtractor random(std::uint64_t seed = 0);
  static ConvFeatureExtractor load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<Tensor> features(const Tensor& image) const override;
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

/// Sum over layers of the mean squared difference between channel-wise
/// unit-normalized features.
Real lpips(const Tensor& a, const Tensor& b, const FeatureExtractor& extractor);

struct ConditionRow {
  std::string condition;
  Real mse = 0;
  Real ssim = 0;
  Real lpips = 0;
  /// Mean squared difference between consecutive generated frames; zero for
  /// single-frame conditions.
  Real temporal_mse = 0;
  /// The same quantity on the ground-truth frames.
  Real reference_temporal_mse = 0;
  std::size_t samples = 0;
  std::size_t frames = 0;
};

struct Report {
  std::vector<ConditionRow> rows;

  /// `condition  MSE  SSIM  LPIPS`, one row per condition.
  void write(const std::filesystem::path& path) const;
  /// Adds the temporal columns and counts.
  void write_details(const std::filesystem::path& path) const;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  SsimParams ssim;
  const FeatureExtractor* extractor = nullptr;  // default: ConvFeatureExtractor::random(0)
  std::optional<std::filesystem::path> grid_dir;
  int grid_samples = 8;
};

/// Generates every sample of `dataset` with seeded noise and scores each
/// frame against ground truth at the model's resolution.
ConditionRow evaluate_condition(const std::string& name, train::TrainState& state, const data::Dataset& dataset,
                                const EvalOptions& options = {});

/// Ground truth against itself; yields the (0, 1, 0) oracle row.
ConditionRow ground_truth_row(const data::Dataset& dataset, int image_size, const EvalOptions& options = {});

/// One row per (condition, checkpoint). Baseline checkpoints are scored on
/// `baseline_set`, which must then be provided.
Report evaluate(const std::vector<std::pair<std::string, std::filesystem::path>>& checkpoints,
                const data::Dataset& triplet_set, const data::Dataset* baseline_set, const EvalOptions& options = {});

/// Noise for sample `index`; depends only on (seed, index).
Tensor evaluation_noise(std::uint64_t seed, int index, int dim);

}  // namespace tavg::metrics
