#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tavg/ops.hpp"

namespace tavg::nn {

using Rng = std::mt19937_64;

/// Standard deviation used for every convolution / affine weight at init.
inline constexpr Real kInitStddev = 0.02;

struct NamedParam {
  std::string name;
  ag::Var var;
};
using ParamList = std::vector<NamedParam>;

ag::Var normal_param(std::vector<int> shape, Real stddev, Rng& rng);
ag::Var filled_param(std::vector<int> shape, Real value);

std::size_t parameter_count(const ParamList& params);
void zero_grads(const ParamList& params);

/// Learned per-channel scale/shift plus running statistics.
struct BatchNorm {
  ag::Var gamma;
  ag::Var beta;
  ag::BatchNormBuffers buffers;

  static BatchNorm make(int channels);
  ag::Var operator()(const ag::Var& x, ag::NormMode mode);
};

}  // namespace tavg::nn
