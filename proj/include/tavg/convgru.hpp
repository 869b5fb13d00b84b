#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tavg/nn.hpp"

namespace tavg::gru {

enum class CandidateActivation { tanh, identity };

struct GruConfig {
  int c_in = 1;
  int c_h = 1;
  int height = 1;
  int width = 1;
  int kernel_size = 3;
  CandidateActivation activation = CandidateActivation::tanh;

  void validate() const;
};

/// Six bias-free kernels of the convolutional GRU:
///
///   Z  = sigmoid(input_update * X + hidden_update * H_prev)
///   R  = sigmoid(input_reset * X + hidden_reset * H_prev)
///   H' = f(input_candidate * X + R o (hidden_candidate * H_prev))
///   H  = (1 - Z) o H' + Z o H_prev
///
/// where * is a same-padded stride-1 convolution and o the elementwise
/// product. Input-side kernels are [c_h, c_in, k, k], hidden-side
/// [c_h, c_h, k, k].
struct GruWeights {
  GruConfig config;
  ag::Var input_update;
  ag::Var hidden_update;
  ag::Var input_reset;
  ag::Var hidden_reset;
  ag::Var input_candidate;
  ag::Var hidden_candidate;

  nn::ParamList parameters(const std::string& prefix = "gru") const;
};

struct GateOutputs {
  ag::Var update;     // Z
  ag::Var reset;      // R
  ag::Var candidate;  // H'
};

GruWeights init_gru(const GruConfig& config, std::uint64_t seed);
GruWeights init_gru(const GruConfig& config, nn::Rng& rng);

/// x: [N, c_in, H, W], h_prev: [N, c_h, H, W].
GateOutputs gates(const ag::Var& x, const ag::Var& h_prev, const GruWeights& weights);
ag::Var blend(const ag::Var& update, const ag::Var& candidate, const ag::Var& h_prev);
ag::Var gru_step(const ag::Var& x, const ag::Var& h_prev, const GruWeights& weights);

/// Applies gru_step over the sequence; returns H_1..H_T.
std::vector<ag::Var> unroll(std::span<const ag::Var> inputs, const ag::Var& h0,
                            const GruWeights& weights);
/// Same input at every step. Input-side convolutions are evaluated once.
std::vector<ag::Var> unroll_constant(const ag::Var& x, int steps, const ag::Var& h0,
                                     const GruWeights& weights);

/// Zero state [n, c_h, height, width].
ag::Var zero_state(const GruConfig& config, int n);

}  // namespace tavg::gru
