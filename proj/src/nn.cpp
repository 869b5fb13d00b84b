#include "tavg/nn.hpp"

namespace tavg::nn {

ag::Var normal_param(std::vector<int> shape, Real stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<Real> dist(0.0, stddev);
  for (auto& v : t.values()) v = dist(rng);
  return ag::Var(std::move(t), true);
}

ag::Var filled_param(std::vector<int> shape, Real value) {
  return ag::Var(Tensor(std::move(shape), value), true);
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    ag::Var v = p.var;
    v.zero_grad();
  }
}

BatchNorm BatchNorm::make(int channels) {
  BatchNorm bn;
  bn.gamma = filled_param({channels}, 1.0);
  bn.beta = filled_param({channels}, 0.0);
  bn.buffers.running_mean = Tensor({channels}, 0.0);
  bn.buffers.running_var = Tensor({channels}, 1.0);
  return bn;
}

ag::Var BatchNorm::operator()(const ag::Var& x, ag::NormMode mode) {
  return ag::batch_norm(x, gamma, beta, buffers, mode);
}

}  // namespace tavg::nn
