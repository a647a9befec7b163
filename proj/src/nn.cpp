// SPDX-License-Identifier: Apache-2.0
#include "nq/nn.hpp"

#include <cmath>

#include "nq/common.hpp"

namespace nq {

AttnParams AttnParams::init(std::size_t d_model, std::size_t n_heads, Rng& rng, double std_dev,
                            bool requires_grad) {
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("attention: width " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  AttnParams p;
  p.n_heads = n_heads;
  p.wq = Tensor::randn({d_model, d_model}, rng, std_dev, requires_grad);
  p.bq = Tensor::zeros({d_model}, requires_grad);
  p.wk = Tensor::randn({d_model, d_model}, rng, std_dev, requires_grad);
  p.bk = Tensor::zeros({d_model}, requires_grad);
  p.wv = Tensor::randn({d_model, d_model}, rng, std_dev, requires_grad);
  p.bv = Tensor::zeros({d_model}, requires_grad);
  p.wo = Tensor::randn({d_model, d_model}, rng, std_dev, requires_grad);
  p.bo = Tensor::zeros({d_model}, requires_grad);
  return p;
}

void AttnParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".wq", wq);
  out.emplace_back(prefix + ".bq", bq);
  out.emplace_back(prefix + ".wk", wk);
  out.emplace_back(prefix + ".bk", bk);
  out.emplace_back(prefix + ".wv", wv);
  out.emplace_back(prefix + ".bv", bv);
  out.emplace_back(prefix + ".wo", wo);
  out.emplace_back(prefix + ".bo", bo);
}

MlpParams MlpParams::init(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng,
                          double std_dev, bool requires_grad) {
  MlpParams p;
  p.w1 = Tensor::randn({d_in, d_hidden}, rng, std_dev, requires_grad);
  p.b1 = Tensor::zeros({d_hidden}, requires_grad);
  p.w2 = Tensor::randn({d_hidden, d_out}, rng, std_dev, requires_grad);
  p.b2 = Tensor::zeros({d_out}, requires_grad);
  return p;
}

void MlpParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
}

LayerNormParams LayerNormParams::init(std::size_t d, bool requires_grad) {
  LayerNormParams p;
  p.gain = Tensor::full({d}, 1.0, requires_grad);
  p.bias = Tensor::zeros({d}, requires_grad);
  return p;
}

void LayerNormParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in, const AttnParams& p,
                           bool causal, std::vector<double>* weight_trace) {
  const std::size_t d_model = p.wq.shape()[0];
  if (q_in.cols() != d_model || kv_in.cols() != d_model)
    throw ShapeError("attention: input width mismatch, queries " + q_in.shape_str() +
                     " keys " + kv_in.shape_str() + " vs model width " +
                     std::to_string(d_model));
  if (causal && q_in.rows() != kv_in.rows())
    throw ShapeError("attention: causal mask requires square scores");

  const std::size_t h = p.n_heads;
  const std::size_t dh = d_model / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = add_rowvec(matmul(q_in, p.wq), p.bq);
  Tensor k = add_rowvec(matmul(kv_in, p.wk), p.bk);
  Tensor v = add_rowvec(matmul(kv_in, p.wv), p.bv);

  const std::size_t n_q = q_in.rows(), n_k = kv_in.rows();
  if (weight_trace) weight_trace->assign(n_q * n_k, 0.0);

  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    Tensor qh = slice_cols(q, i * dh, (i + 1) * dh);
    Tensor kh = slice_cols(k, i * dh, (i + 1) * dh);
    Tensor vh = slice_cols(v, i * dh, (i + 1) * dh);
    Tensor scores = smul(matmul(qh, transpose(kh)), scale);
    Tensor w = causal ? softmax_causal(scores) : softmax(scores, -1);
    if (weight_trace)
      for (std::size_t j = 0; j < w.size(); ++j)
        (*weight_trace)[j] += w.data()[j] / static_cast<double>(h);
    heads.push_back(matmul(w, vh));
  }
  Tensor merged = h == 1 ? heads[0] : concat_cols(heads);
  return add_rowvec(matmul(merged, p.wo), p.bo);
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  return add_rowvec(matmul(gelu(add_rowvec(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

std::uint64_t fingerprint_params(const NamedParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : params) {
    h = fnv1a(name, h);
    for (auto d : t.shape()) {
      std::uint64_t v = d;
      h = fnv1a(&v, sizeof v, h);
    }
    h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
  }
  return h;
}

void set_trainable(NamedParams& params, bool trainable) {
  for (auto& [name, t] : params) t.set_requires_grad(trainable);
}

}  // namespace nq
