// SPDX-License-Identifier: Apache-2.0
#include "nq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace nq {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string fmt_shape(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void require_2d(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw ShapeError(std::string(what) + ": expected 2-D tensor, got " + t.shape_str());
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics

Tensor make_op(std::vector<std::size_t> shape,
               std::vector<std::shared_ptr<detail::Node>> parents) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data.assign(shape_product(n->shape), 0.0);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  Tensor t;
  t.node_->shape = std::move(shape);
  t.node_->data.assign(shape_product(t.node_->shape), 0.0);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_product(shape) != data.size())
    throw ShapeError("from_data: shape " + fmt_shape(shape) + " does not cover " +
                     std::to_string(data.size()) + " values");
  Tensor t;
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double std_dev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.node_->data) v = rng.gaussian() * std_dev;
  return t;
}

std::size_t Tensor::rows() const {
  require_2d(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_2d(*this, "cols");
  return node_->shape[1];
}

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value: tensor " + shape_str() + " is not a scalar");
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_2d(*this, "at");
  return node_->data[r * node_->shape[1] + c];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->grad_present)
    throw Error("grad: no gradient present (backward not run or node unreachable)");
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.clear();
  node_->grad_present = false;
}

std::string Tensor::shape_str() const { return fmt_shape(node_->shape); }

Tensor Tensor::detach() const {
  Tensor t;
  t.node_->shape = node_->shape;
  t.node_->data = node_->data;
  t.node_->requires_grad = false;
  return t;
}

void Tensor::backward() const {
  if (size() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str());

  // Iterative post-order DFS for the topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (node_->requires_grad) stack.push_back({node_.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent == 0) {
      if (visited.count(f.n)) {
        stack.pop_back();
        continue;
      }
      visited.insert(f.n);
    }
    if (f.next_parent < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next_parent++].get();
      if (!visited.count(p) && p->requires_grad) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  if (!node_->requires_grad) return;
  node_->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop && n->grad_present) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_op(a.shape(), {a.node(), b.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] + b.data()[i];
  out.node()->backprop = [an = a.node(), bn = b.node()](detail::Node& n) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i];
    }
  };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_op(a.shape(), {a.node(), b.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] - b.data()[i];
  out.node()->backprop = [an = a.node(), bn = b.node()](detail::Node& n) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i] -= n.grad[i];
    }
  };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_op(a.shape(), {a.node(), b.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * b.data()[i];
  out.node()->backprop = [an = a.node(), bn = b.node()](detail::Node& n) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i] * an->data[i];
    }
  };
  return out;
}

Tensor smul(const Tensor& a, double c) {
  Tensor out = make_op(a.shape(), {a.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * c;
  out.node()->backprop = [an = a.node(), c](detail::Node& n) {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * c;
  };
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = make_op(x.shape(), {x.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < o.size(); ++i) {
    double v = x.data()[i];
    o[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  out.node()->backprop = [xn = x.node()](detail::Node& n) {
    if (!xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      double v = xn->data[i];
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += n.grad[i] * (cdf + v * pdf);
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul lhs");
  require_2d(b, "matmul rhs");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                     b.shape_str());
  Tensor out = make_op({m, n}, {a.node(), b.node()});
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.node()->data.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double av = A[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = B + kk * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  out.node()->backprop = [an = a.node(), bn = b.node(), m, k, n](detail::Node& nd) {
    const double* G = nd.grad.data();
    if (an->requires_grad) {
      double* GA = an->ensure_grad().data();
      const double* B = bn->data.data();
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double s = 0.0;
          const double* grow = G + i * n;
          const double* brow = B + kk * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          GA[i * k + kk] += s;
        }
    }
    if (bn->requires_grad) {
      double* GB = bn->ensure_grad().data();
      const double* A = an->data.data();
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double av = A[i * k + kk];
          if (av == 0.0) continue;
          const double* grow = G + i * n;
          double* gbrow = GB + kk * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  };
  return out;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = make_op({n, m}, {a.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = a.data()[i * n + j];
  out.node()->backprop = [an = a.node(), m, n](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += nd.grad[j * m + i];
  };
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  require_2d(a, "add_rowvec lhs");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (b.size() != n)
    throw ShapeError("add_rowvec: vector " + b.shape_str() + " does not match row width " +
                     std::to_string(n));
  Tensor out = make_op(a.shape(), {a.node(), b.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = a.data()[i * n + j] + b.data()[j];
  out.node()->backprop = [an = a.node(), bn = b.node(), m, n](detail::Node& nd) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[i] += nd.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += nd.grad[i * n + j];
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Shape surgery

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
  if (shape_product(shape) != a.size())
    throw ShapeError("reshape: " + a.shape_str() + " to " + fmt_shape(shape) +
                     " changes element count");
  Tensor out = make_op(std::move(shape), {a.node()});
  out.node()->data = a.data();
  out.node()->backprop = [an = a.node()](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[i] += nd.grad[i];
  };
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  require_2d(a, "slice_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (r0 > r1 || r1 > m)
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                     ") out of " + a.shape_str());
  Tensor out = make_op({r1 - r0, n}, {a.node()});
  std::copy(a.data().begin() + r0 * n, a.data().begin() + r1 * n, out.node()->data.begin());
  out.node()->backprop = [an = a.node(), r0, n](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[r0 * n + i] += nd.grad[i];
  };
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  require_2d(a, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (c0 > c1 || c1 > n)
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") out of " + a.shape_str());
  const std::size_t w = c1 - c0;
  Tensor out = make_op({m, w}, {a.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) o[i * w + j] = a.data()[i * n + c0 + j];
  out.node()->backprop = [an = a.node(), m, n, c0, w](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * n + c0 + j] += nd.grad[i * w + j];
  };
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::shared_ptr<detail::Node>> parents;
  for (const auto& p : parts) {
    if (p.cols() != n)
      throw ShapeError("concat_rows: width mismatch " + parts[0].shape_str() + " vs " +
                       p.shape_str());
    m += p.rows();
    parents.push_back(p.node());
  }
  Tensor out = make_op({m, n}, std::move(parents));
  auto& o = out.node()->data;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), o.begin() + off);
    off += p.size();
  }
  out.node()->backprop = [](detail::Node& nd) {
    std::size_t off = 0;
    for (auto& pn : nd.parents) {
      if (pn->requires_grad) {
        auto& g = pn->ensure_grad();
        for (std::size_t i = 0; i < pn->data.size(); ++i) g[i] += nd.grad[off + i];
      }
      off += pn->data.size();
    }
  };
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::shared_ptr<detail::Node>> parents;
  for (const auto& p : parts) {
    if (p.rows() != m)
      throw ShapeError("concat_cols: height mismatch " + parts[0].shape_str() + " vs " +
                       p.shape_str());
    n += p.cols();
    parents.push_back(p.node());
  }
  Tensor out = make_op({m, n}, std::move(parents));
  auto& o = out.node()->data;
  std::size_t coff = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) o[i * n + coff + j] = p.data()[i * w + j];
    coff += w;
  }
  out.node()->backprop = [m, n](detail::Node& nd) {
    std::size_t coff = 0;
    for (auto& pn : nd.parents) {
      const std::size_t w = pn->shape[1];
      if (pn->requires_grad) {
        auto& g = pn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += nd.grad[i * n + coff + j];
      }
      coff += w;
    }
  };
  return out;
}

Tensor stack_groups(const std::vector<Tensor>& mats) {
  if (mats.empty()) throw ShapeError("stack_groups: no matrices");
  const std::size_t q = mats[0].rows(), d = mats[0].cols(), g = mats.size();
  std::vector<std::shared_ptr<detail::Node>> parents;
  for (const auto& m : mats) {
    if (m.rows() != q || m.cols() != d)
      throw ShapeError("stack_groups: shape mismatch " + mats[0].shape_str() + " vs " +
                       m.shape_str());
    parents.push_back(m.node());
  }
  Tensor out = make_op({q, g, d}, std::move(parents));
  auto& o = out.node()->data;
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t qi = 0; qi < q; ++qi)
      for (std::size_t di = 0; di < d; ++di)
        o[(qi * g + gi) * d + di] = mats[gi].data()[qi * d + di];
  out.node()->backprop = [q, g, d](detail::Node& nd) {
    for (std::size_t gi = 0; gi < g; ++gi) {
      auto& pn = nd.parents[gi];
      if (!pn->requires_grad) continue;
      auto& gr = pn->ensure_grad();
      for (std::size_t qi = 0; qi < q; ++qi)
        for (std::size_t di = 0; di < d; ++di)
          gr[qi * d + di] += nd.grad[(qi * g + gi) * d + di];
    }
  };
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& idx) {
  require_2d(table, "gather_rows");
  const std::size_t n = table.shape()[1], m = table.shape()[0];
  for (auto i : idx)
    if (i >= m)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " +
                       table.shape_str());
  Tensor out = make_op({idx.size(), n}, {table.node()});
  auto& o = out.node()->data;
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(table.data().begin() + idx[r] * n, table.data().begin() + (idx[r] + 1) * n,
              o.begin() + r * n);
  out.node()->backprop = [tn = table.node(), idx, n](detail::Node& nd) {
    if (!tn->requires_grad) return;
    auto& g = tn->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += nd.grad[r * n + j];
  };
  return out;
}

Tensor gather_cols(const Tensor& a, const std::vector<std::size_t>& idx) {
  require_2d(a, "gather_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  for (auto i : idx)
    if (i >= n)
      throw ShapeError("gather_cols: index " + std::to_string(i) + " out of " + a.shape_str());
  const std::size_t w = idx.size();
  Tensor out = make_op({m, w}, {a.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) o[i * w + j] = a.data()[i * n + idx[j]];
  out.node()->backprop = [an = a.node(), idx, m, n, w](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + idx[j]] += nd.grad[i * w + j];
  };
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  require_2d(a, "scale_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (w.size() != m)
    throw ShapeError("scale_rows: weights " + w.shape_str() + " do not match rows " +
                     std::to_string(m));
  Tensor out = make_op(a.shape(), {a.node(), w.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = a.data()[i * n + j] * w.data()[i];
  out.node()->backprop = [an = a.node(), wn = w.node(), m, n](detail::Node& nd) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += nd.grad[i * n + j] * wn->data[i];
    }
    if (wn->requires_grad) {
      auto& gw = wn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += nd.grad[i * n + j] * an->data[i * n + j];
        gw[i] += s;
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum_all(const Tensor& a) {
  Tensor out = make_op({1}, {a.node()});
  out.node()->data[0] = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  out.node()->backprop = [an = a.node()](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (auto& v : g) v += nd.grad[0];
  };
  return out;
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = make_op({1}, {a.node()});
  out.node()->data[0] = std::accumulate(a.data().begin(), a.data().end(), 0.0) * inv;
  out.node()->backprop = [an = a.node(), inv](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (auto& v : g) v += nd.grad[0] * inv;
  };
  return out;
}

Tensor mean_rows(const Tensor& a) {
  require_2d(a, "mean_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (m == 0) throw ShapeError("mean_rows: empty matrix");
  const double inv = 1.0 / static_cast<double>(m);
  Tensor out = make_op({1, n}, {a.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j] += a.data()[i * n + j] * inv;
  out.node()->backprop = [an = a.node(), m, n, inv](detail::Node& nd) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += nd.grad[j] * inv;
  };
  return out;
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("div_scalar: divisor " + s.shape_str() + " not scalar");
  const double sv = s.data()[0];
  Tensor out = make_op(a.shape(), {a.node(), s.node()});
  auto& o = out.node()->data;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] / sv;
  out.node()->backprop = [an = a.node(), sn = s.node()](detail::Node& nd) {
    const double sv = sn->data[0];
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[i] += nd.grad[i] / sv;
    }
    if (sn->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < nd.grad.size(); ++i) acc += nd.grad[i] * an->data[i];
      sn->ensure_grad()[0] += -acc / (sv * sv);
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Softmax / layer norm

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t r = x.rank();
  if (r == 0) throw ShapeError("softmax: rank-0 tensor");
  std::size_t ax = axis < 0 ? r + static_cast<std::size_t>(axis) : static_cast<std::size_t>(axis);
  if (ax >= r) throw ShapeError("softmax: axis out of range for " + x.shape_str());
  const auto& shape = x.shape();
  const std::size_t lane = shape[ax];
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = ax + 1; i < r; ++i) inner *= shape[i];
  for (std::size_t i = 0; i < ax; ++i) outer *= shape[i];

  Tensor out = make_op(shape, {x.node()});
  auto& o = out.node()->data;
  const auto& xd = x.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * lane * inner + b;
      double mx = xd[base];
      for (std::size_t l = 1; l < lane; ++l) mx = std::max(mx, xd[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < lane; ++l) {
        double e = std::exp(xd[base + l * inner] - mx);
        o[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < lane; ++l) o[base + l * inner] /= z;
    }
  }
  out.node()->backprop = [xn = x.node(), outer, inner, lane](detail::Node& nd) {
    if (!xn->requires_grad) return;
    auto& g = xn->ensure_grad();
    const auto& s = nd.data;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * lane * inner + b;
        double dot = 0.0;
        for (std::size_t l = 0; l < lane; ++l)
          dot += nd.grad[base + l * inner] * s[base + l * inner];
        for (std::size_t l = 0; l < lane; ++l) {
          const std::size_t i = base + l * inner;
          g[i] += s[i] * (nd.grad[i] - dot);
        }
      }
    }
  };
  return out;
}

Tensor softmax_causal(const Tensor& scores) {
  require_2d(scores, "softmax_causal");
  const std::size_t L = scores.shape()[0];
  if (scores.shape()[1] != L)
    throw ShapeError("softmax_causal: expected square matrix, got " + scores.shape_str());
  Tensor out = make_op(scores.shape(), {scores.node()});
  auto& o = out.node()->data;
  const auto& xd = scores.data();
  for (std::size_t i = 0; i < L; ++i) {
    double mx = xd[i * L];
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, xd[i * L + j]);
    double z = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      double e = std::exp(xd[i * L + j] - mx);
      o[i * L + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j <= i; ++j) o[i * L + j] /= z;
    // entries j > i stay exactly zero
  }
  out.node()->backprop = [xn = scores.node(), L](detail::Node& nd) {
    if (!xn->requires_grad) return;
    auto& g = xn->ensure_grad();
    const auto& s = nd.data;
    for (std::size_t i = 0; i < L; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) dot += nd.grad[i * L + j] * s[i * L + j];
      for (std::size_t j = 0; j <= i; ++j)
        g[i * L + j] += s[i * L + j] * (nd.grad[i * L + j] - dot);
    }
  };
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_2d(x, "layer_norm");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (gain.size() != n || bias.size() != n)
    throw ShapeError("layer_norm: gain/bias width does not match " + x.shape_str());
  constexpr double eps = 1e-5;
  Tensor out = make_op(x.shape(), {x.node(), gain.node(), bias.node()});
  auto& o = out.node()->data;
  // Cache per-row inv-std and normalized values for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x.data()[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d = x.data()[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      double xh = (x.data()[i * n + j] - mean) * is;
      (*xhat)[i * n + j] = xh;
      o[i * n + j] = gain.data()[j] * xh + bias.data()[j];
    }
  }
  out.node()->backprop = [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat, inv_std, m,
                          n](detail::Node& nd) {
    if (gn->requires_grad) {
      auto& gg = gn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += nd.grad[i * n + j] * (*xhat)[i * n + j];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += nd.grad[i * n + j];
    }
    if (xn->requires_grad) {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double dxh = nd.grad[i * n + j] * gn->data[j];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * (*xhat)[i * n + j];
        }
        mean_dxh /= static_cast<double>(n);
        mean_dxh_xh /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          double dxh = nd.grad[i * n + j] * gn->data[j];
          gx[i * n + j] +=
              (*inv_std)[i] * (dxh - mean_dxh - (*xhat)[i * n + j] * mean_dxh_xh);
        }
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Causal cross-entropy

std::vector<double> cross_entropy_terms(const std::vector<double>& logits,
                                        std::size_t vocab, const std::vector<int>& targets,
                                        const std::vector<std::uint8_t>& mask) {
  const std::size_t L = targets.size();
  std::vector<double> terms(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    if (!mask[i]) continue;
    const double* row = logits.data() + i * vocab;
    double mx = row[0];
    for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, row[v]);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    terms[i] = -(row[targets[i]] - mx - std::log(z));
  }
  return terms;
}

Tensor cross_entropy_causal(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask) {
  require_2d(logits, "cross_entropy_causal");
  const std::size_t L = logits.shape()[0], V = logits.shape()[1];
  if (targets.size() != L || mask.size() != L)
    throw ShapeError("cross_entropy_causal: targets/mask length " +
                     std::to_string(targets.size()) + "/" + std::to_string(mask.size()) +
                     " does not match logits " + logits.shape_str());
  std::size_t n_masked = 0;
  for (std::size_t i = 0; i < L; ++i) {
    if (!mask[i]) continue;
    ++n_masked;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V)
      throw ShapeError("cross_entropy_causal: target id " + std::to_string(targets[i]) +
                       " outside vocab " + std::to_string(V));
  }
  if (n_masked == 0)
    throw NumericError("cross_entropy_causal: degenerate loss, mask selects no positions");

  Tensor out = make_op({1}, {logits.node()});
  auto terms = cross_entropy_terms(logits.data(), V, targets, mask);
  out.node()->data[0] =
      std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(n_masked);
  out.node()->backprop = [ln = logits.node(), targets, mask, L, V, n_masked](detail::Node& nd) {
    if (!ln->requires_grad) return;
    auto& g = ln->ensure_grad();
    const double scale = nd.grad[0] / static_cast<double>(n_masked);
    for (std::size_t i = 0; i < L; ++i) {
      if (!mask[i]) continue;
      const double* row = ln->data.data() + i * V;
      double mx = row[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
      double z = 0.0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(row[v] - mx);
      for (std::size_t v = 0; v < V; ++v) {
        double p = std::exp(row[v] - mx) / z;
        g[i * V + v] += scale * (p - (static_cast<std::size_t>(targets[i]) == v ? 1.0 : 0.0));
      }
    }
  };
  return out;
}

}  // namespace nq
