#pragma once

#include <vector>

#include "tavg/autograd.hpp"

namespace tavg::ag {

// Elementwise. Binary operands must have identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var one_minus(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, Real slope);
Var log(const Var& a);
/// Gradient passes only where lo <= a <= hi.
Var clamp(const Var& a, Real lo, Real hi);

// Reductions to a scalar of shape [1].
Var sum(const Var& a);
Var mean(const Var& a);

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;

  static ConvGeometry square(int kernel, int stride, int pad) {
    return {kernel, kernel, stride, stride, pad, pad};
  }
  /// Stride-1 convolution that preserves spatial extent (odd kernels).
  static ConvGeometry same(int kernel) { return square(kernel, 1, kernel / 2); }
};

/// x: [N, C, H, W], weight: [O, C, kh, kw], bias: [O] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

/// x: [N, C, H, W], weight: [C, O, kh, kw] (input-major, as the adjoint of
/// conv2d). Output extent is (H - 1) * stride - 2 * pad + kernel.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

/// x: [N, F], weight: [O, F], bias: [O] or undefined. Returns [N, O].
Var linear(const Var& x, const Var& weight, const Var& bias);

enum class NormMode {
  train,            // batch statistics, running averages updated
  train_no_update,  // batch statistics, running averages untouched
  inference,        // running averages
};

struct BatchNormBuffers {
  Tensor running_mean;
  Tensor running_var;
  Real momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  Real eps = 1e-5;
};

/// Per-channel normalization over N (and H, W for rank-4 input).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormBuffers& buffers,
               NormMode mode);

/// Concatenates along axis 1. All parts share every other dimension.
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& x, int start, int count);

/// [N, C] -> [N, C, H, W] by spatial replication.
Var broadcast_spatial(const Var& y, int height, int width);
/// [N, C, H, W] -> [N, C].
Var global_avg_pool(const Var& x);
Var reshape(const Var& x, std::vector<int> shape);
/// Picks rows n * period + offset of a [N * period, ...] tensor.
Var select_rows(const Var& x, int period, int offset);

}  // namespace tavg::ag
