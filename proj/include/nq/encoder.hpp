// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "nq/nn.hpp"
#include "nq/signal.hpp"
#include "nq/tensor.hpp"

namespace nq {

struct EncoderConfig {
  std::size_t d_e = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t patch_len = 200;
  std::size_t max_channels = 32;
  std::size_t max_patches = 64;
  std::uint64_t seed = 1;
  bool positional = true;  // test hook: disables channel/time codes when false
};

// Token layout contract: row 0 is the class token, row 1 + c*T + tau is
// patch (c, tau).
struct TokenEmbedding {
  Tensor tokens;  // (C*T + 1) x D_e
  std::size_t channels = 0;
  std::size_t patches = 0;

  std::size_t token_index(std::size_t c, std::size_t tau) const {
    return 1 + c * patches + tau;
  }
};

// Frozen stand-in for a pre-trained patch-token encoder: seeded random
// per-patch linear embedding, additive channel/time codes, and pre-norm
// self-attention blocks. Weights never require grad.
class EegEncoder {
 public:
  explicit EegEncoder(const EncoderConfig& cfg);

  TokenEmbedding encode(const PatchGrid& grid) const;

  std::uint64_t fingerprint() const { return fingerprint_params(params_); }
  const NamedParams& parameters() const { return params_; }
  NamedParams& parameters() { return params_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNormParams ln1, ln2;
    AttnParams attn;
    MlpParams mlp;
  };

  EncoderConfig cfg_;
  Tensor patch_w_, patch_b_;
  Tensor class_token_;
  Tensor chan_pos_, time_pos_;
  std::vector<Block> blocks_;
  NamedParams params_;
};

}  // namespace nq
