// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nq/common.hpp"
#include "nq/rng.hpp"

namespace nq {

namespace detail {

struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until backward reaches this node
  bool grad_present = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents. Null for leaves.
  std::function<void(Node&)> backprop;

  std::size_t size() const { return data.size(); }
  std::vector<double>& ensure_grad() {
    if (!grad_present) {
      grad.assign(data.size(), 0.0);
      grad_present = true;
    }
    return grad;
  }
};

}  // namespace detail

// Dense 64-bit tensor participating in a define-by-run reverse-mode graph.
// Copies share the underlying node (shallow value-handle semantics).
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double std_dev,
                      bool requires_grad = false);

  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& data() { return node_->data; }
  double value() const;                       // scalar tensors only
  double at(std::size_t r, std::size_t c) const;  // 2-D convenience

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool grad_present() const { return node_->grad_present; }
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Reverse pass from a scalar root; populates grad on every reachable
  /// requires_grad tensor and touches nothing else.
  void backward() const;

  /// Value copy detached from the graph (leaf, requires_grad = false).
  Tensor detach() const;

  bool is_leaf() const { return node_->backprop == nullptr; }
  std::shared_ptr<detail::Node> node() const { return node_; }

  std::string shape_str() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
  friend Tensor make_op(std::vector<std::size_t> shape,
                        std::vector<std::shared_ptr<detail::Node>> parents);
};

Tensor make_op(std::vector<std::size_t> shape,
               std::vector<std::shared_ptr<detail::Node>> parents);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor smul(const Tensor& a, double c);
Tensor gelu(const Tensor& x);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// rows of `a` plus broadcast row vector `b` (shape [n] or [1, n]).
Tensor add_rowvec(const Tensor& a, const Tensor& b);

// ---- shape surgery ----
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Stack G matrices of shape [n, d] into [n, G, d]: out[q, g, :] = mats[g][q, :].
Tensor stack_groups(const std::vector<Tensor>& mats);
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& idx);
Tensor gather_cols(const Tensor& a, const std::vector<std::size_t>& idx);
/// out[i, :] = a[i, :] * w[i] with w a [1, k] or [k] vector.
Tensor scale_rows(const Tensor& a, const Tensor& w);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [m, n] -> [1, n]
/// a / s with s a scalar tensor.
Tensor div_scalar(const Tensor& a, const Tensor& s);

// ---- normalization & attention ----
/// Numerically stabilized softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis = -1);
/// Row-wise softmax over a square [L, L] score matrix where row i only sees
/// columns j <= i; masked entries are exactly zero.
Tensor softmax_causal(const Tensor& scores);
/// Per-row layer normalization with learned gain/bias (shape [n]), eps 1e-5.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// ---- loss ----
/// Mean over masked positions of -log softmax(logits[i])[targets[i]].
/// logits: [L, V]; targets: ids in [0, V); mask marks scored positions.
Tensor cross_entropy_causal(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask);
/// Value-level per-position terms (0 where mask is false); test/audit helper.
std::vector<double> cross_entropy_terms(const std::vector<double>& logits,
                                        std::size_t vocab, const std::vector<int>& targets,
                                        const std::vector<std::uint8_t>& mask);

}  // namespace nq
