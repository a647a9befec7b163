// SPDX-License-Identifier: Apache-2.0
#include "nq/encoder.hpp"

#include "nq/common.hpp"

namespace nq {

EegEncoder::EegEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.n_heads == 0 || cfg.d_e % cfg.n_heads != 0)
    throw ConfigError("encoder: d_e " + std::to_string(cfg.d_e) + " not divisible by " +
                      std::to_string(cfg.n_heads) + " heads");
  Rng rng = Rng(cfg.seed).fork("encoder");
  const double std_dev = 0.02;

  patch_w_ = Tensor::randn({cfg.patch_len, cfg.d_e}, rng, std_dev);
  patch_b_ = Tensor::zeros({cfg.d_e});
  class_token_ = Tensor::randn({1, cfg.d_e}, rng, std_dev);
  chan_pos_ = Tensor::randn({cfg.max_channels, cfg.d_e}, rng, std_dev);
  time_pos_ = Tensor::randn({cfg.max_patches, cfg.d_e}, rng, std_dev);

  blocks_.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Block b;
    b.ln1 = LayerNormParams::init(cfg.d_e, false);
    b.attn = AttnParams::init(cfg.d_e, cfg.n_heads, rng, std_dev, false);
    b.ln2 = LayerNormParams::init(cfg.d_e, false);
    b.mlp = MlpParams::init(cfg.d_e, 4 * cfg.d_e, cfg.d_e, rng, std_dev, false);
    blocks_.push_back(std::move(b));
  }

  params_.emplace_back("encoder.patch_w", patch_w_);
  params_.emplace_back("encoder.patch_b", patch_b_);
  params_.emplace_back("encoder.class_token", class_token_);
  params_.emplace_back("encoder.chan_pos", chan_pos_);
  params_.emplace_back("encoder.time_pos", time_pos_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string prefix = "encoder.block" + std::to_string(l);
    blocks_[l].ln1.collect(prefix + ".ln1", params_);
    blocks_[l].attn.collect(prefix + ".attn", params_);
    blocks_[l].ln2.collect(prefix + ".ln2", params_);
    blocks_[l].mlp.collect(prefix + ".mlp", params_);
  }
}

TokenEmbedding EegEncoder::encode(const PatchGrid& grid) const {
  if (grid.channels == 0 || grid.patches == 0)
    throw ConfigError("encoder: empty patch grid");
  if (grid.patch_len != cfg_.patch_len)
    throw ShapeError("encoder: patch length " + std::to_string(grid.patch_len) +
                     " does not match configured " + std::to_string(cfg_.patch_len));
  if (grid.channels > cfg_.max_channels || grid.patches > cfg_.max_patches)
    throw ConfigError("encoder: grid " + std::to_string(grid.channels) + "x" +
                      std::to_string(grid.patches) + " exceeds positional tables " +
                      std::to_string(cfg_.max_channels) + "x" + std::to_string(cfg_.max_patches));

  const std::size_t c = grid.channels, t = grid.patches;
  // Row c*T + tau of the patch matrix is patch (c, tau): token row index - 1.
  Tensor patches = Tensor::from_data({c * t, cfg_.patch_len}, grid.data);
  Tensor x = add_rowvec(matmul(patches, patch_w_), patch_b_);

  if (cfg_.positional) {
    std::vector<std::size_t> chan_idx(c * t), time_idx(c * t);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti) {
        chan_idx[ci * t + ti] = ci;
        time_idx[ci * t + ti] = ti;
      }
    x = add(x, add(gather_rows(chan_pos_, chan_idx), gather_rows(time_pos_, time_idx)));
  }

  Tensor tokens = concat_rows({class_token_, x});
  for (const auto& block : blocks_) {
    Tensor normed = layer_norm(tokens, block.ln1.gain, block.ln1.bias);
    tokens = add(tokens, multihead_attention(normed, normed, block.attn));
    tokens = add(tokens, mlp_forward(layer_norm(tokens, block.ln2.gain, block.ln2.bias),
                                     block.mlp));
  }

  TokenEmbedding out;
  out.tokens = tokens;
  out.channels = c;
  out.patches = t;
  return out;
}

}  // namespace nq
