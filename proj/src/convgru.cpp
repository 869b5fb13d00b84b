#include "tavg/convgru.hpp"

#include "tavg/errors.hpp"

namespace tavg::gru {
namespace {

struct InputTerms {
  ag::Var update, reset, candidate;
};

void check_shapes(const ag::Var& x, const ag::Var& h_prev, const GruConfig& c) {
  const auto& xs = x.shape();
  const auto& hs = h_prev.shape();
  if (xs.size() != 4 || xs[1] != c.c_in || xs[2] != c.height || xs[3] != c.width) {
    throw ConfigError("convgru: input shape " + shape_string(xs) + " does not match config [N, " +
                      std::to_string(c.c_in) + ", " + std::to_string(c.height) + ", " +
                      std::to_string(c.width) + "]");
  }
  if (hs.size() != 4 || hs[0] != xs[0] || hs[1] != c.c_h || hs[2] != c.height || hs[3] != c.width) {
    throw ConfigError("convgru: state shape " + shape_string(hs) + " does not match config");
  }
}

ag::Var same_conv(const ag::Var& x, const ag::Var& kernel, int k) {
  return ag::conv2d(x, kernel, ag::Var{}, ag::ConvGeometry::same(k));
}

InputTerms input_terms(const ag::Var& x, const GruWeights& w) {
  const int k = w.config.kernel_size;
  return {same_conv(x, w.input_update, k), same_conv(x, w.input_reset, k),
          same_conv(x, w.input_candidate, k)};
}

GateOutputs gates_from_terms(const InputTerms& in, const ag::Var& h_prev, const GruWeights& w) {
  const int k = w.config.kernel_size;
  GateOutputs out;
  out.update = ag::sigmoid(ag::add(in.update, same_conv(h_prev, w.hidden_update, k)));
  out.reset = ag::sigmoid(ag::add(in.reset, same_conv(h_prev, w.hidden_reset, k)));
  ag::Var pre = ag::add(in.candidate, ag::mul(out.reset, same_conv(h_prev, w.hidden_candidate, k)));
  out.candidate = w.config.activation == CandidateActivation::tanh ? ag::tanh(pre) : pre;
  return out;
}

}  // namespace

void GruConfig::validate() const {
  if (c_in <= 0 || c_h <= 0 || height <= 0 || width <= 0 || kernel_size <= 0) {
    throw ConfigError("convgru: all dimensions must be positive");
  }
  if (kernel_size % 2 == 0) throw ConfigError("convgru: kernel_size must be odd");
}

nn::ParamList GruWeights::parameters(const std::string& prefix) const {
  return {{prefix + ".input_update", input_update},
          {prefix + ".hidden_update", hidden_update},
          {prefix + ".input_reset", input_reset},
          {prefix + ".hidden_reset", hidden_reset},
          {prefix + ".input_candidate", input_candidate},
          {prefix + ".hidden_candidate", hidden_candidate}};
}

GruWeights init_gru(const GruConfig& config, nn::Rng& rng) {
  config.validate();
  const int k = config.kernel_size;
  auto in_kernel = [&] { return nn::normal_param({config.c_h, config.c_in, k, k}, nn::kInitStddev, rng); };
  auto h_kernel = [&] { return nn::normal_param({config.c_h, config.c_h, k, k}, nn::kInitStddev, rng); };
  GruWeights w;
  w.config = config;
  w.input_update = in_kernel();
  w.hidden_update = h_kernel();
  w.input_reset = in_kernel();
  w.hidden_reset = h_kernel();
  w.input_candidate = in_kernel();
  w.hidden_candidate = h_kernel();
  return w;
}

GruWeights init_gru(const GruConfig& config, std::uint64_t seed) {
  nn::Rng rng(seed);
  return init_gru(config, rng);
}

GateOutputs gates(const ag::Var& x, const ag::Var& h_prev, const GruWeights& weights) {
  check_shapes(x, h_prev, weights.config);
  return gates_from_terms(input_terms(x, weights), h_prev, weights);
}

ag::Var blend(const ag::Var& update, const ag::Var& candidate, const ag::Var& h_prev) {
  if (update.shape() != candidate.shape() || update.shape() != h_prev.shape()) {
    throw ConfigError("convgru blend: shape mismatch " + shape_string(update.shape()) + ", " +
                      shape_string(candidate.shape()) + ", " + shape_string(h_prev.shape()));
  }
  return ag::add(ag::mul(ag::one_minus(update), candidate), ag::mul(update, h_prev));
}

ag::Var gru_step(const ag::Var& x, const ag::Var& h_prev, const GruWeights& weights) {
  const GateOutputs g = gates(x, h_prev, weights);
  return blend(g.update, g.candidate, h_prev);
}

std::vector<ag::Var> unroll(std::span<const ag::Var> inputs, const ag::Var& h0,
                            const GruWeights& weights) {
  if (inputs.empty()) throw ConfigError("convgru unroll: empty sequence");
  std::vector<ag::Var> states;
  states.reserve(inputs.size());
  ag::Var h = h0;
  for (const auto& x : inputs) {
    h = gru_step(x, h, weights);
    states.push_back(h);
  }
  return states;
}

std::vector<ag::Var> unroll_constant(const ag::Var& x, int steps, const ag::Var& h0,
                                     const GruWeights& weights) {
  if (steps < 1) throw ConfigError("convgru unroll: empty sequence");
  check_shapes(x, h0, weights.config);
  const InputTerms terms = input_terms(x, weights);
  std::vector<ag::Var> states;
  states.reserve(static_cast<std::size_t>(steps));
  ag::Var h = h0;
  for (int t = 0; t < steps; ++t) {
    const GateOutputs g = gates_from_terms(terms, h, weights);
    h = blend(g.update, g.candidate, h);
    states.push_back(h);
  }
  return states;
}

ag::Var zero_state(const GruConfig& config, int n) {
  return ag::constant(Tensor({n, config.c_h, config.height, config.width}, 0.0));
}

}  // namespace tavg::gru
