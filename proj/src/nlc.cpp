// SPDX-License-Identifier: Apache-2.0
#include "nq/nlc.hpp"

#include "nq/common.hpp"

namespace nq {

Nlc::Nlc(const NlcConfig& cfg) : cfg_(cfg) {
  Rng rng = Rng(cfg.seed).fork("nlc");
  const double std_dev = 0.02;
  const std::size_t hidden = cfg.mlp_hidden ? cfg.mlp_hidden : 4 * cfg.d_e;

  auto make_branch = [&](const char*) {
    BranchParams b;
    b.ln_q = LayerNormParams::init(cfg.d_e, true);
    b.ln_kv = LayerNormParams::init(cfg.d_e, true);
    b.ln_mid = LayerNormParams::init(cfg.d_e, true);
    b.attn = AttnParams::init(cfg.d_e, cfg.n_heads, rng, std_dev, true);
    b.mlp = MlpParams::init(cfg.d_e, hidden, cfg.d_e, rng, std_dev, true);
    return b;
  };
  temporal_ = make_branch("t");
  spatial_ = make_branch("s");
  proj_w_ = Tensor::randn({cfg.d_e, cfg.d_l}, rng, std_dev, true);
  proj_b_ = Tensor::zeros({cfg.d_l}, true);

  auto collect_branch = [&](const std::string& prefix, BranchParams& b) {
    b.ln_q.collect(prefix + ".ln_q", params_);
    b.ln_kv.collect(prefix + ".ln_kv", params_);
    b.ln_mid.collect(prefix + ".ln_mid", params_);
    b.attn.collect(prefix + ".attn", params_);
    b.mlp.collect(prefix + ".mlp", params_);
  };
  collect_branch("nlc.temporal", temporal_);
  collect_branch("nlc.spatial", spatial_);
  params_.emplace_back("nlc.proj_w", proj_w_);
  params_.emplace_back("nlc.proj_b", proj_b_);
}

Tensor Nlc::cross_attend(const Tensor& queries, const Tensor& kv_groups, const AttnParams& p,
                         std::vector<std::vector<double>>* trace) {
  if (kv_groups.rank() != 3)
    throw ShapeError("cross_attend: expected [G, L, D] keys/values, got " +
                     kv_groups.shape_str());
  const std::size_t g = kv_groups.shape()[0];
  const std::size_t l = kv_groups.shape()[1];
  const std::size_t d = kv_groups.shape()[2];
  if (queries.cols() != d)
    throw ShapeError("cross_attend: query width " + queries.shape_str() +
                     " does not match token width " + std::to_string(d));
  Tensor kv_flat = reshape(kv_groups, {g * l, d});
  if (trace) trace->assign(g, {});

  std::vector<Tensor> per_group;
  per_group.reserve(g);
  for (std::size_t gi = 0; gi < g; ++gi) {
    Tensor kv = slice_rows(kv_flat, gi * l, (gi + 1) * l);
    per_group.push_back(
        multihead_attention(queries, kv, p, false, trace ? &(*trace)[gi] : nullptr));
  }
  return stack_groups(per_group);
}

Tensor Nlc::branch_forward(const BranchParams& b, const Tensor& queries,
                           const Tensor& kv_groups,
                           std::vector<std::vector<double>>* trace) const {
  const std::size_t g = kv_groups.shape()[0];
  const std::size_t l = kv_groups.shape()[1];
  Tensor q_normed = layer_norm(queries, b.ln_q.gain, b.ln_q.bias);
  Tensor kv_normed = reshape(
      layer_norm(reshape(kv_groups, {g * l, cfg_.d_e}), b.ln_kv.gain, b.ln_kv.bias),
      {g, l, cfg_.d_e});
  Tensor attended = cross_attend(q_normed, kv_normed, b.attn, trace);
  Tensor flat = reshape(attended, {queries.rows() * g, cfg_.d_e});
  return add(flat, mlp_forward(layer_norm(flat, b.ln_mid.gain, b.ln_mid.bias), b.mlp));
}

NlcOutput Nlc::forward(const TokenEmbedding& e, const Tensor& q_t, const Tensor& q_s,
                       NlcAttnTrace* trace) const {
  const std::size_t c = e.channels, t = e.patches;
  if (q_t.rows() == 0 || q_s.rows() == 0)
    throw ConfigError("nlc: each branch needs at least one query (the static query)");
  if (q_t.cols() != cfg_.d_e || q_s.cols() != cfg_.d_e)
    throw ShapeError("nlc: query width must be D_e = " + std::to_string(cfg_.d_e));
  if (e.tokens.rows() != c * t + 1)
    throw ShapeError("nlc: token matrix " + e.tokens.shape_str() +
                     " inconsistent with layout C=" + std::to_string(c) +
                     " T=" + std::to_string(t));

  const std::size_t n_qt = q_t.rows(), n_qs = q_s.rows();

  // Patch rows in token order are row-major (channel, time): E_t directly.
  Tensor patch_rows = slice_rows(e.tokens, 1, 1 + c * t);
  Tensor e_t = reshape(patch_rows, {c, t, cfg_.d_e});

  // E_s regroups by time step; row (tau, c) pulls token 1 + c*T + tau.
  std::vector<std::size_t> s_index;
  s_index.reserve(c * t);
  for (std::size_t tau = 0; tau < t; ++tau)
    for (std::size_t ci = 0; ci < c; ++ci) s_index.push_back(1 + ci * t + tau);
  Tensor e_s = reshape(gather_rows(e.tokens, s_index), {t, c, cfg_.d_e});

  NlcOutput out;
  Tensor flat_t = branch_forward(temporal_, q_t, e_t, trace ? &trace->temporal : nullptr);
  Tensor flat_s = branch_forward(spatial_, q_s, e_s, trace ? &trace->spatial : nullptr);
  out.f_t = reshape(flat_t, {n_qt, c, cfg_.d_e});
  out.f_s = reshape(flat_s, {n_qs, t, cfg_.d_e});
  out.f_cls = slice_rows(e.tokens, 0, 1);
  out.f = concat_rows({flat_t, flat_s, out.f_cls});
  out.f_prime = add_rowvec(matmul(out.f, proj_w_), proj_b_);
  return out;
}

}  // namespace nq
