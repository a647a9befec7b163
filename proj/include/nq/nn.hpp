// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nq/rng.hpp"
#include "nq/tensor.hpp"

namespace nq {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct AttnParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t n_heads = 1;

  static AttnParams init(std::size_t d_model, std::size_t n_heads, Rng& rng, double std_dev,
                         bool requires_grad);
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct MlpParams {
  Tensor w1, b1, w2, b2;

  static MlpParams init(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng,
                        double std_dev, bool requires_grad);
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNormParams {
  Tensor gain, bias;

  static LayerNormParams init(std::size_t d, bool requires_grad);
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Standard multi-head attention. q_in: [n_q, d]; kv_in: [L, d]. With
/// `causal` set (square case only) row i attends to keys j <= i.
/// `weight_trace`, when given, receives the head-averaged post-softmax
/// weights as a flat [n_q x L] row-major value array.
Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in, const AttnParams& p,
                           bool causal = false, std::vector<double>* weight_trace = nullptr);

/// x -> gelu(x W1 + b1) W2 + b2, applied row-wise.
Tensor mlp_forward(const Tensor& x, const MlpParams& p);

/// Content hash over shapes and raw values of the given tensors, in order.
std::uint64_t fingerprint_params(const NamedParams& params);

/// Flip requires_grad on every tensor in the list.
void set_trainable(NamedParams& params, bool trainable);

}  // namespace nq
