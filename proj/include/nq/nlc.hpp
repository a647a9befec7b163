// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "nq/encoder.hpp"
#include "nq/nn.hpp"
#include "nq/tensor.hpp"

namespace nq {

struct NlcConfig {
  std::size_t d_e = 64;
  std::size_t d_l = 64;
  std::size_t n_heads = 8;
  std::size_t mlp_hidden = 0;  // 0 -> 4 * d_e
  std::uint64_t seed = 1;
};

struct NlcOutput {
  Tensor f_t;      // [n_qt, C, D_e]
  Tensor f_s;      // [n_qs, T, D_e]
  Tensor f_cls;    // [1, D_e], the untouched class token
  Tensor f;        // [n_qt*C + n_qs*T + 1, D_e]
  Tensor f_prime;  // same rows, width D_L
};

// Head-averaged post-softmax attention weights captured during forward,
// one flat [n_q x L] array per group. Spatial groups are time steps with
// channels as keys, which is what the channel-attention analysis consumes.
struct NlcAttnTrace {
  std::vector<std::vector<double>> temporal;  // C entries of n_qt x T
  std::vector<std::vector<double>> spatial;   // T entries of n_qs x C
};

// Dual-branch connector: temporal queries attend per channel over that
// channel's time tokens, spatial queries attend per time step over channels.
// Branch outputs get a residual two-layer MLP, are concatenated with the
// class token, and projected once into the language-model width.
class Nlc {
 public:
  explicit Nlc(const NlcConfig& cfg);

  /// Grouped multi-head cross-attention: queries [n_q, D], kv [G, L, D],
  /// groups share parameters; output [n_q, G, D].
  static Tensor cross_attend(const Tensor& queries, const Tensor& kv_groups,
                             const AttnParams& p,
                             std::vector<std::vector<double>>* trace = nullptr);

  NlcOutput forward(const TokenEmbedding& e, const Tensor& q_t, const Tensor& q_s,
                    NlcAttnTrace* trace = nullptr) const;

  NamedParams& parameters() { return params_; }
  const NamedParams& parameters() const { return params_; }
  std::uint64_t fingerprint() const { return fingerprint_params(params_); }
  const NlcConfig& config() const { return cfg_; }

 private:
  struct BranchParams {
    LayerNormParams ln_q, ln_kv, ln_mid;
    AttnParams attn;
    MlpParams mlp;
  };

  Tensor branch_forward(const BranchParams& b, const Tensor& queries, const Tensor& kv_groups,
                        std::vector<std::vector<double>>* trace) const;

  NlcConfig cfg_;
  BranchParams temporal_, spatial_;
  Tensor proj_w_, proj_b_;  // shared D_e -> D_L map
  NamedParams params_;
};

}  // namespace nq
