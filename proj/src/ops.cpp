#include "tavg/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "tavg/errors.hpp"

namespace tavg::ag {
namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

void require_rank(const Var& a, int rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      shape_string(a.shape()));
  }
}

template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return make_result(std::move(y), {a}, [deriv](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
    }
  });
}

Real stable_sigmoid(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

// NCHW <-> channel-major [C, N * HW] permutations.
void to_channel_major(const Real* x, int n, int c, std::size_t hw, Real* out) {
  const std::size_t row = static_cast<std::size_t>(n) * hw;
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = x + (static_cast<std::size_t>(s) * c + ch) * hw;
      Real* dst = out + ch * row + s * hw;
      std::copy(src, src + hw, dst);
    }
  }
}

void add_from_channel_major(const Real* in, int n, int c, std::size_t hw, Real* x) {
  const std::size_t row = static_cast<std::size_t>(n) * hw;
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = in + ch * row + s * hw;
      Real* dst = x + (static_cast<std::size_t>(s) * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
    }
  }
}

struct ImageDims {
  int n, c, h, w;
};

// cols: [C * kh * kw, N * Ho * Wo]
void im2col(const Real* x, const ImageDims& d, const ConvGeometry& g, int ho, int wo, Real* cols) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t width = plane * d.n;
  for (int ch = 0; ch < d.c; ++ch) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        Real* row = cols + ((static_cast<std::size_t>(ch) * g.kernel_h + ki) * g.kernel_w + kj) * width;
        for (int s = 0; s < d.n; ++s) {
          const Real* src = x + (static_cast<std::size_t>(s) * d.c + ch) * d.h * d.w;
          Real* dst = row + s * plane;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * g.stride_h - g.pad_h + ki;
            Real* out = dst + static_cast<std::size_t>(oh) * wo;
            if (ih < 0 || ih >= d.h) {
              std::fill(out, out + wo, 0.0);
              continue;
            }
            const Real* in = src + static_cast<std::size_t>(ih) * d.w;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * g.stride_w - g.pad_w + kj;
              out[ow] = (iw >= 0 && iw < d.w) ? in[iw] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, const ImageDims& d, const ConvGeometry& g, int ho, int wo, Real* x) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t width = plane * d.n;
  for (int ch = 0; ch < d.c; ++ch) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const Real* row =
            cols + ((static_cast<std::size_t>(ch) * g.kernel_h + ki) * g.kernel_w + kj) * width;
        for (int s = 0; s < d.n; ++s) {
          Real* dst = x + (static_cast<std::size_t>(s) * d.c + ch) * d.h * d.w;
          const Real* src = row + s * plane;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * g.stride_h - g.pad_h + ki;
            if (ih < 0 || ih >= d.h) continue;
            Real* out = dst + static_cast<std::size_t>(ih) * d.w;
            const Real* in = src + static_cast<std::size_t>(oh) * wo;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * g.stride_w - g.pad_w + kj;
              if (iw >= 0 && iw < d.w) out[iw] += in[ow];
            }
          }
        }
      }
    }
  }
}

void add_bias_nchw(Tensor& y, const Tensor& bias) {
  const int n = y.dim(0), c = y.dim(1);
  const std::size_t hw = y.size() / (static_cast<std::size_t>(n) * c);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      Real* p = y.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += bias[ch];
    }
  }
}

void accumulate_bias_grad(const Tensor& dy, Tensor& db) {
  const int n = dy.dim(0), c = dy.dim(1);
  const std::size_t hw = dy.size() / (static_cast<std::size_t>(n) * c);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const Real* p = dy.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
      Real acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      db[ch] += acc;
    }
  }
}

int conv_out(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0 || stride <= 0) return -1;
  return span / stride + 1;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    Node& x0 = *self.inputs[0];
    Node& x1 = *self.inputs[1];
    if (x0.requires_grad) {
      Tensor& g = x0.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x1.value[i];
    }
    if (x1.requires_grad) {
      Tensor& g = x1.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x0.value[i];
    }
  });
}

Var scale(const Var& a, Real s) {
  return unary(a, [s](Real x) { return s * x; }, [s](Real, Real) { return s; });
}

Var one_minus(const Var& a) {
  return unary(a, [](Real x) { return 1.0 - x; }, [](Real, Real) { return -1.0; });
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](Real, Real y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(a, [](Real x) { return x > 0 ? x : 0.0; },
               [](Real x, Real) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, Real slope) {
  return unary(a, [slope](Real x) { return x > 0 ? x : slope * x; },
               [slope](Real x, Real) { return x > 0 ? 1.0 : slope; });
}

Var log(const Var& a) {
  return unary(a, [](Real x) { return std::log(x); }, [](Real x, Real) { return 1.0 / x; });
}

Var clamp(const Var& a, Real lo, Real hi) {
  return unary(a, [lo, hi](Real x) { return x < lo ? lo : (x > hi ? hi : x); },
               [lo, hi](Real x, Real) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  Real acc = 0;
  for (Real v : a.value().values()) acc += v;
  return make_result(Tensor({1}, acc), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw ConfigError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<Real>(a.value().size()));
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  require_rank(x, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const ImageDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  const int out_c = weight.dim(0);
  if (weight.dim(1) != d.c || weight.dim(2) != g.kernel_h || weight.dim(3) != g.kernel_w) {
    throw ConfigError("conv2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                      shape_string(x.shape()));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != out_c)) {
    throw ConfigError("conv2d: bias shape " + shape_string(bias.shape()));
  }
  const int ho = conv_out(d.h, g.kernel_h, g.stride_h, g.pad_h);
  const int wo = conv_out(d.w, g.kernel_w, g.stride_w, g.pad_w);
  if (ho <= 0 || wo <= 0) throw ConfigError("conv2d: input smaller than kernel " + shape_string(x.shape()));

  const int ckk = d.c * g.kernel_h * g.kernel_w;
  const std::size_t np = static_cast<std::size_t>(d.n) * ho * wo;
  std::vector<Real> cols(static_cast<std::size_t>(ckk) * np);
  im2col(x.value().data(), d, g, ho, wo, cols.data());

  std::vector<Real> out_mat(static_cast<std::size_t>(out_c) * np);
  MapR(out_mat.data(), out_c, static_cast<Eigen::Index>(np)).noalias() =
      CMapR(weight.value().data(), out_c, ckk) * CMapR(cols.data(), ckk, static_cast<Eigen::Index>(np));

  Tensor y({d.n, out_c, ho, wo});
  add_from_channel_major(out_mat.data(), d.n, out_c, static_cast<std::size_t>(ho) * wo, y.data());
  if (bias.defined()) add_bias_nchw(y, bias.value());

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(y), std::move(inputs), [d, g, ho, wo, out_c, ckk, np](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    std::vector<Real> dmat(static_cast<std::size_t>(out_c) * np);
    to_channel_major(self.grad.data(), d.n, out_c, static_cast<std::size_t>(ho) * wo, dmat.data());
    const auto np_i = static_cast<Eigen::Index>(np);
    if (wn.requires_grad) {
      std::vector<Real> cols(static_cast<std::size_t>(ckk) * np);
      im2col(xn.value.data(), d, g, ho, wo, cols.data());
      MapR(wn.grad_buffer().data(), out_c, ckk).noalias() +=
          CMapR(dmat.data(), out_c, np_i) * CMapR(cols.data(), ckk, np_i).transpose();
    }
    if (xn.requires_grad) {
      std::vector<Real> dcols(static_cast<std::size_t>(ckk) * np);
      MapR(dcols.data(), ckk, np_i).noalias() =
          CMapR(wn.value.data(), out_c, ckk).transpose() * CMapR(dmat.data(), out_c, np_i);
      col2im(dcols.data(), d, g, ho, wo, xn.grad_buffer().data());
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      accumulate_bias_grad(self.grad, self.inputs[2]->grad_buffer());
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  require_rank(x, 4, "conv_transpose2d input");
  require_rank(weight, 4, "conv_transpose2d weight");
  const int n = x.dim(0), in_c = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  const int out_c = weight.dim(1);
  if (weight.dim(0) != in_c || weight.dim(2) != g.kernel_h || weight.dim(3) != g.kernel_w) {
    throw ConfigError("conv_transpose2d: weight " + shape_string(weight.shape()) +
                      " incompatible with input " + shape_string(x.shape()));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != out_c)) {
    throw ConfigError("conv_transpose2d: bias shape " + shape_string(bias.shape()));
  }
  const int ho = (hi - 1) * g.stride_h - 2 * g.pad_h + g.kernel_h;
  const int wo = (wi - 1) * g.stride_w - 2 * g.pad_w + g.kernel_w;
  if (ho <= 0 || wo <= 0) throw ConfigError("conv_transpose2d: empty output");

  const ImageDims od{n, out_c, ho, wo};
  const int okk = out_c * g.kernel_h * g.kernel_w;
  const std::size_t np = static_cast<std::size_t>(n) * hi * wi;
  const auto np_i = static_cast<Eigen::Index>(np);

  std::vector<Real> xmat(static_cast<std::size_t>(in_c) * np);
  to_channel_major(x.value().data(), n, in_c, static_cast<std::size_t>(hi) * wi, xmat.data());
  std::vector<Real> cols(static_cast<std::size_t>(okk) * np);
  MapR(cols.data(), okk, np_i).noalias() =
      CMapR(weight.value().data(), in_c, okk).transpose() * CMapR(xmat.data(), in_c, np_i);

  Tensor y({n, out_c, ho, wo});
  col2im(cols.data(), od, g, hi, wi, y.data());
  if (bias.defined()) add_bias_nchw(y, bias.value());

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(y), std::move(inputs),
                     [od, g, hi, wi, in_c, okk, np, np_i](Node& self) {
                       Node& xn = *self.inputs[0];
                       Node& wn = *self.inputs[1];
                       std::vector<Real> dcols(static_cast<std::size_t>(okk) * np);
                       im2col(self.grad.data(), od, g, hi, wi, dcols.data());
                       const std::size_t hw = static_cast<std::size_t>(hi) * wi;
                       if (xn.requires_grad) {
                         std::vector<Real> dx(static_cast<std::size_t>(in_c) * np);
                         MapR(dx.data(), in_c, np_i).noalias() =
                             CMapR(wn.value.data(), in_c, okk) * CMapR(dcols.data(), okk, np_i);
                         add_from_channel_major(dx.data(), od.n, in_c, hw, xn.grad_buffer().data());
                       }
                       if (wn.requires_grad) {
                         std::vector<Real> xmat(static_cast<std::size_t>(in_c) * np);
                         to_channel_major(xn.value.data(), od.n, in_c, hw, xmat.data());
                         MapR(wn.grad_buffer().data(), in_c, okk).noalias() +=
                             CMapR(xmat.data(), in_c, np_i) *
                             CMapR(dcols.data(), okk, np_i).transpose();
                       }
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         accumulate_bias_grad(self.grad, self.inputs[2]->grad_buffer());
                       }
                     });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const int n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) {
    throw ConfigError("linear: weight " + shape_string(weight.shape()) + " incompatible with input " +
                      shape_string(x.shape()));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != o)) {
    throw ConfigError("linear: bias shape " + shape_string(bias.shape()));
  }
  Tensor y({n, o});
  MapR(y.data(), n, o).noalias() =
      CMapR(x.value().data(), n, f) * CMapR(weight.value().data(), o, f).transpose();
  if (bias.defined()) {
    for (int s = 0; s < n; ++s)
      for (int j = 0; j < o; ++j) y[static_cast<std::size_t>(s) * o + j] += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(y), std::move(inputs), [n, f, o](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    CMapR dy(self.grad.data(), n, o);
    if (xn.requires_grad) {
      MapR(xn.grad_buffer().data(), n, f).noalias() += dy * CMapR(wn.value.data(), o, f);
    }
    if (wn.requires_grad) {
      MapR(wn.grad_buffer().data(), o, f).noalias() += dy.transpose() * CMapR(xn.value.data(), n, f);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor& db = self.inputs[2]->grad_buffer();
      for (int s = 0; s < n; ++s)
        for (int j = 0; j < o; ++j) db[j] += self.grad[static_cast<std::size_t>(s) * o + j];
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormBuffers& buffers,
               NormMode mode) {
  const int rank = x.value().rank();
  if (rank != 2 && rank != 4) throw ConfigError("batch_norm: rank must be 2 or 4");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = rank == 4 ? static_cast<std::size_t>(x.dim(2)) * x.dim(3) : 1;
  if (gamma.value().size() != static_cast<std::size_t>(c) ||
      beta.value().size() != static_cast<std::size_t>(c) ||
      buffers.running_mean.size() != static_cast<std::size_t>(c) ||
      buffers.running_var.size() != static_cast<std::size_t>(c)) {
    throw ConfigError("batch_norm: parameter size does not match " + std::to_string(c) + " channels");
  }
  const Real count = static_cast<Real>(n) * static_cast<Real>(hw);
  const bool batch_stats = mode != NormMode::inference;

  auto xhat = std::make_shared<Tensor>(Tensor::zeros_like(x.value()));
  auto inv_std = std::make_shared<std::vector<Real>>(c);
  Tensor y = Tensor::zeros_like(x.value());
  const Tensor& xv = x.value();
  for (int ch = 0; ch < c; ++ch) {
    Real mu, var;
    if (batch_stats) {
      Real acc = 0;
      for (int s = 0; s < n; ++s) {
        const Real* p = xv.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      mu = acc / count;
      Real sq = 0;
      for (int s = 0; s < n; ++s) {
        const Real* p = xv.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      var = sq / count;
      if (mode == NormMode::train) {
        const Real unbiased = count > 1 ? var * count / (count - 1) : var;
        const Real m = buffers.momentum;
        buffers.running_mean[ch] = m * buffers.running_mean[ch] + (1 - m) * mu;
        buffers.running_var[ch] = m * buffers.running_var[ch] + (1 - m) * unbiased;
      }
    } else {
      mu = buffers.running_mean[ch];
      var = buffers.running_var[ch];
    }
    const Real is = 1.0 / std::sqrt(var + buffers.eps);
    (*inv_std)[ch] = is;
    const Real gm = gamma.value()[ch], bt = beta.value()[ch];
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const Real h = (xv[off + i] - mu) * is;
        (*xhat)[off + i] = h;
        y[off + i] = gm * h + bt;
      }
    }
  }

  return make_result(std::move(y), {x, gamma, beta},
                     [xhat, inv_std, n, c, hw, count, batch_stats](Node& self) {
                       Node& xn = *self.inputs[0];
                       Node& gn = *self.inputs[1];
                       Node& bn = *self.inputs[2];
                       const Tensor& dy = self.grad;
                       for (int ch = 0; ch < c; ++ch) {
                         Real sum_dy = 0, sum_dy_xhat = 0;
                         for (int s = 0; s < n; ++s) {
                           const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
                           for (std::size_t i = 0; i < hw; ++i) {
                             sum_dy += dy[off + i];
                             sum_dy_xhat += dy[off + i] * (*xhat)[off + i];
                           }
                         }
                         if (gn.requires_grad) gn.grad_buffer()[ch] += sum_dy_xhat;
                         if (bn.requires_grad) bn.grad_buffer()[ch] += sum_dy;
                         if (!xn.requires_grad) continue;
                         Tensor& dx = xn.grad_buffer();
                         const Real gm = gn.value[ch];
                         const Real is = (*inv_std)[ch];
                         for (int s = 0; s < n; ++s) {
                           const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * hw;
                           for (std::size_t i = 0; i < hw; ++i) {
                             if (batch_stats) {
                               dx[off + i] += gm * is / count *
                                              (count * dy[off + i] - sum_dy -
                                               (*xhat)[off + i] * sum_dy_xhat);
                             } else {
                               dx[off + i] += gm * is * dy[off + i];
                             }
                           }
                         }
                       }
                     });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  const auto& ref = parts.front().shape();
  if (ref.size() < 2) throw ConfigError("concat_channels: rank must be >= 2");
  const int n = ref[0];
  const std::size_t inner = element_count(ref) / (static_cast<std::size_t>(n) * ref[1]);
  int total_c = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != ref.size() || s[0] != n ||
        element_count(s) / (static_cast<std::size_t>(n) * s[1]) != inner) {
      throw ConfigError("concat_channels: incompatible shapes " + shape_string(ref) + " and " +
                        shape_string(s));
    }
    total_c += s[1];
  }
  std::vector<int> out_shape = ref;
  out_shape[1] = total_c;
  Tensor y(out_shape);
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& p : parts) {
    const int pc = p.dim(1);
    offsets.push_back(c0);
    for (int s = 0; s < n; ++s) {
      const Real* src = p.value().data() + static_cast<std::size_t>(s) * pc * inner;
      Real* dst = y.data() + (static_cast<std::size_t>(s) * total_c + c0) * inner;
      std::copy(src, src + pc * inner, dst);
    }
    c0 += pc;
  }
  return make_result(std::move(y), parts, [offsets, n, total_c, inner](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const int pc = in.value.dim(1);
      Tensor& g = in.grad_buffer();
      for (int s = 0; s < n; ++s) {
        const Real* src = self.grad.data() + (static_cast<std::size_t>(s) * total_c + offsets[k]) * inner;
        Real* dst = g.data() + static_cast<std::size_t>(s) * pc * inner;
        for (std::size_t i = 0; i < pc * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice_channels(const Var& x, int start, int count) {
  const auto& shape = x.shape();
  if (shape.size() < 2 || start < 0 || count <= 0 || start + count > shape[1]) {
    throw ConfigError("slice_channels: range [" + std::to_string(start) + ", " +
                      std::to_string(start + count) + ") invalid for " + shape_string(shape));
  }
  const int n = shape[0], c = shape[1];
  const std::size_t inner = element_count(shape) / (static_cast<std::size_t>(n) * c);
  std::vector<int> out_shape = shape;
  out_shape[1] = count;
  Tensor y(out_shape);
  for (int s = 0; s < n; ++s) {
    const Real* src = x.value().data() + (static_cast<std::size_t>(s) * c + start) * inner;
    std::copy(src, src + count * inner, y.data() + static_cast<std::size_t>(s) * count * inner);
  }
  return make_result(std::move(y), {x}, [n, c, start, count, inner](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int s = 0; s < n; ++s) {
      Real* dst = g.data() + (static_cast<std::size_t>(s) * c + start) * inner;
      const Real* src = self.grad.data() + static_cast<std::size_t>(s) * count * inner;
      for (std::size_t i = 0; i < count * inner; ++i) dst[i] += src[i];
    }
  });
}

Var broadcast_spatial(const Var& y, int height, int width) {
  require_rank(y, 2, "broadcast_spatial");
  const int n = y.dim(0), c = y.dim(1);
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  Tensor out({n, c, height, width});
  for (std::size_t k = 0; k < static_cast<std::size_t>(n) * c; ++k) {
    std::fill(out.data() + k * hw, out.data() + (k + 1) * hw, y.value()[k]);
  }
  return make_result(std::move(out), {y}, [n, c, hw](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < static_cast<std::size_t>(n) * c; ++k) {
      Real acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += self.grad[k * hw + i];
      g[k] += acc;
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out({n, c});
  for (std::size_t k = 0; k < static_cast<std::size_t>(n) * c; ++k) {
    Real acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += x.value()[k * hw + i];
    out[k] = acc / static_cast<Real>(hw);
  }
  return make_result(std::move(out), {x}, [n, c, hw](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const Real inv = 1.0 / static_cast<Real>(hw);
    for (std::size_t k = 0; k < static_cast<std::size_t>(n) * c; ++k) {
      for (std::size_t i = 0; i < hw; ++i) g[k * hw + i] += self.grad[k] * inv;
    }
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_result(std::move(y), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var select_rows(const Var& x, int period, int offset) {
  const auto& shape = x.shape();
  if (shape.empty() || period <= 0 || offset < 0 || offset >= period || shape[0] % period != 0) {
    throw ConfigError("select_rows: period " + std::to_string(period) + " offset " +
                      std::to_string(offset) + " invalid for " + shape_string(shape));
  }
  const int n = shape[0] / period;
  const std::size_t row = element_count(shape) / static_cast<std::size_t>(shape[0]);
  std::vector<int> out_shape = shape;
  out_shape[0] = n;
  Tensor y(out_shape);
  for (int s = 0; s < n; ++s) {
    const Real* src = x.value().data() + (static_cast<std::size_t>(s) * period + offset) * row;
    std::copy(src, src + row, y.data() + static_cast<std::size_t>(s) * row);
  }
  return make_result(std::move(y), {x}, [n, period, offset, row](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int s = 0; s < n; ++s) {
      Real* dst = g.data() + (static_cast<std::size_t>(s) * period + offset) * row;
      const Real* src = self.grad.data() + static_cast<std::size_t>(s) * row;
      for (std::size_t i = 0; i < row; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace tavg::ag
