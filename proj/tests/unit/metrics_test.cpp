#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "support/fixtures.hpp"
#include "support/temp_dir.hpp"
#include "tavg/errors.hpp"
#include "tavg/metrics.hpp"

using namespace tavg;
using namespace tavg::metrics;
using tavg::testing::synthetic_dataset;
using tavg::testing::tiny_config;

namespace {

Tensor random_image(std::mt19937_64& rng, std::vector<int> shape) {
  std::uniform_real_distribution<Real> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

Tensor filled(std::vector<int> shape, Real v) {
  Tensor t(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

const data::Dataset& triplets() {
  static const data::Dataset ds = synthetic_dataset(data::DatasetMode::triplet, 1.2);
  return ds;
}

}  // namespace

TEST(Mse, MatchesLoop) {
  std::mt19937_64 rng(3);
  const auto a = random_image(rng, {3, 9, 7});
  const auto b = random_image(rng, {3, 9, 7});
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(mse(a, b), s / a.size(), 1e-12);
}

TEST(Mse, SmallExample) {
  // Differences of 0, 1, 0, 0 average to 0.25.
  Tensor a({1, 2, 2}), b({1, 2, 2});
  b[1] = 1.0;
  EXPECT_DOUBLE_EQ(mse(a, b), 0.25);
  EXPECT_THROW(mse(a, Tensor({1, 2, 3})), ConfigError);
}

TEST(Ssim, ConstantImagesClosedForm) {
  SsimParams p;
  p.dynamic_range = 1.0;
  const auto a = filled({1, 16, 16}, 0.2);
  const auto b = filled({1, 16, 16}, 0.6);
  // Zero variances leave only the luminance term.
  const Real c1 = 0.01 * 0.01;
  const Real expected = (2 * 0.2 * 0.6 + c1) / (0.2 * 0.2 + 0.6 * 0.6 + c1);
  EXPECT_NEAR(ssim(a, b, p), expected, 1e-9);
  EXPECT_NEAR(expected, 0.6002, 1e-3);
}

TEST(Ssim, SingleWindowMatchesDirectFormula) {
  std::mt19937_64 rng(5);
  const auto a = random_image(rng, {1, 11, 11});
  const auto b = random_image(rng, {1, 11, 11});
  // Separable Gaussian built from a 1-D kernel.
  std::vector<Real> g1(11);
  Real s1 = 0;
  for (int i = 0; i < 11; ++i) s1 += g1[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
  for (auto& v : g1) v /= s1;
  Real ma = 0, mb = 0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      ma += g1[y] * g1[x] * a[y * 11 + x];
      mb += g1[y] * g1[x] * b[y * 11 + x];
    }
  Real va = 0, vb = 0, cov = 0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const Real w = g1[y] * g1[x];
      va += w * (a[y * 11 + x] - ma) * (a[y * 11 + x] - ma);
      vb += w * (b[y * 11 + x] - mb) * (b[y * 11 + x] - mb);
      cov += w * (a[y * 11 + x] - ma) * (b[y * 11 + x] - mb);
    }
  const Real c1 = (0.01 * 2) * (0.01 * 2), c2 = (0.03 * 2) * (0.03 * 2);
  const Real expected = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  EXPECT_NEAR(ssim(a, b), expected, 1e-12);
}

TEST(Ssim, IdentityAndSymmetry) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_image(rng, {3, 12, 12});
    const auto b = random_image(rng, {3, 12, 12});
    EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LE(ssim(a, b), 1.0);
  }
}

TEST(Ssim, RejectsSmallImagesAndBadParams) {
  EXPECT_THROW(ssim(Tensor({3, 8, 8}), Tensor({3, 8, 8})), ConfigError);
  SsimParams p;
  p.sigma = 0;
  EXPECT_THROW(ssim(Tensor({3, 16, 16}), Tensor({3, 16, 16}), p), ConfigError);
}

TEST(Lpips, IdentityPositivitySymmetry) {
  const auto fx = ConvFeatureExtractor::random(0);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_image(rng, {3, 8, 8});
    const auto b = random_image(rng, {3, 8, 8});
    EXPECT_EQ(lpips(a, a, fx), 0.0);
    EXPECT_GT(lpips(a, b, fx), 0.0);
    EXPECT_NEAR(lpips(a, b, fx), lpips(b, a, fx), 1e-12);
  }
}

TEST(Lpips, IdentityLayerMatchesHandComputation) {
  ConvFeatureExtractor::Layer l{Tensor({3, 3, 1, 1}), Tensor({3}), 1};
  for (int c = 0; c < 3; ++c) l.weight[c * 3 + c] = 1.0;
  const ConvFeatureExtractor fx({l});
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<Real> u(0.05, 1.0);
  Tensor a({3, 4, 4}), b({3, 4, 4});
  for (auto& v : a.values()) v = u(rng);
  for (auto& v : b.values()) v = u(rng);
  Real total = 0;
  for (int p = 0; p < 16; ++p) {
    const Real na = std::hypot(a[p], a[16 + p], a[32 + p]);
    const Real nb = std::hypot(b[p], b[16 + p], b[32 + p]);
    for (int c = 0; c < 3; ++c) {
      const Real d = a[c * 16 + p] / na - b[c * 16 + p] / nb;
      total += d * d;
    }
  }
  EXPECT_NEAR(lpips(a, b, fx), total / 48, 1e-8);
}

TEST(Lpips, WeightsRoundTrip) {
  test::TempDir dir;
  const auto fx = ConvFeatureExtractor::random(42);
  fx.save(dir / "w.lpw");
  const auto back = ConvFeatureExtractor::load(dir / "w.lpw");
  ASSERT_EQ(back.layers().size(), fx.layers().size());
  for (std::size_t i = 0; i < fx.layers().size(); ++i) {
    EXPECT_EQ(back.layers()[i].weight.shape(), fx.layers()[i].weight.shape());
    EXPECT_TRUE(std::equal(back.layers()[i].weight.values().begin(), back.layers()[i].weight.values().end(),
                           fx.layers()[i].weight.values().begin()));
    EXPECT_EQ(back.layers()[i].stride, fx.layers()[i].stride);
  }
  std::ofstream(dir / "bad.lpw") << "LPW2";
  EXPECT_THROW(ConvFeatureExtractor::load(dir / "bad.lpw"), DataError);
  EXPECT_THROW(ConvFeatureExtractor::load(dir / "missing.lpw"), DataError);
}

TEST(Evaluate, GroundTruthOracleRow) {
  const auto row = ground_truth_row(triplets(), 16);
  EXPECT_EQ(row.mse, 0.0);
  EXPECT_EQ(row.ssim, 1.0);
  EXPECT_EQ(row.lpips, 0.0);
  EXPECT_EQ(row.samples, triplets().samples.size());
  EXPECT_EQ(row.frames, 3 * triplets().samples.size());
}

TEST(Evaluate, EmptySetIsAnError) {
  data::Dataset empty;
  empty.manifest.mode = data::DatasetMode::triplet;
  auto state = train::init_state(tiny_config(train::ModelMode::with_gru));
  try {
    evaluate_condition("x", state, empty);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty evaluation set"), std::string::npos);
  }
  EXPECT_THROW(ground_truth_row(empty, 16), DataError);
}

TEST(Evaluate, PermutationInvariant) {
  auto state = train::init_state(tiny_config(train::ModelMode::with_gru));
  const auto base = evaluate_condition("a", state, triplets());
  auto shuffled = triplets();
  std::mt19937_64 rng(17);
  std::shuffle(shuffled.samples.begin(), shuffled.samples.end(), rng);
  const auto row = evaluate_condition("a", state, shuffled);
  EXPECT_EQ(row.mse, base.mse);
  EXPECT_EQ(row.ssim, base.ssim);
  EXPECT_EQ(row.lpips, base.lpips);
  EXPECT_EQ(row.temporal_mse, base.temporal_mse);
  EXPECT_GT(base.mse, 0.0);
  EXPECT_LT(base.ssim, 1.0);
}

TEST(Evaluate, NoiseDependsOnlyOnSeedAndIndex) {
  const auto a = evaluation_noise(3, 7, 100);
  const auto b = evaluation_noise(3, 7, 100);
  const auto c = evaluation_noise(3, 8, 100);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST(Evaluate, ReportsOneRowPerCondition) {
  test::TempDir dir;
  const auto baseline = synthetic_dataset(data::DatasetMode::baseline, 3.0);
  std::vector<std::pair<std::string, std::filesystem::path>> ckpts;
  for (auto mode : {train::ModelMode::with_gru, train::ModelMode::no_gru, train::ModelMode::baseline}) {
    auto cfg = tiny_config(mode);
    cfg.iterations = 2;
    const auto& ds = mode == train::ModelMode::baseline ? baseline : triplets();
    const auto path = dir / (train::to_string(mode) + ".ckpt");
    train::train(cfg, ds, {.checkpoint = path});
    ckpts.emplace_back(train::to_string(mode), path);
  }
  EvalOptions opts;
  opts.grid_dir = dir / "grids";

  const std::vector two(ckpts.begin(), ckpts.begin() + 2);
  const auto r2 = evaluate(two, triplets(), nullptr, opts);
  ASSERT_EQ(r2.rows.size(), 2u);
  EXPECT_THROW(evaluate(ckpts, triplets(), nullptr, opts), ConfigError);

  const auto r3 = evaluate(ckpts, triplets(), &baseline, opts);
  ASSERT_EQ(r3.rows.size(), 3u);
  EXPECT_EQ(r3.rows[2].frames, baseline.samples.size());
  EXPECT_EQ(r3.rows[2].temporal_mse, 0.0);
  EXPECT_GT(r3.rows[0].temporal_mse, 0.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "grids" / "with_gru.png"));

  r3.write(dir / "report.tsv");
  std::ifstream in(dir / "report.tsv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "condition\tMSE\tSSIM\tLPIPS");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}
