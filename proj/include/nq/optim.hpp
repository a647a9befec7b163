// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "nq/tensor.hpp"

namespace nq {

/// Linear warmup to base_lr over the first warmup_ratio fraction of
/// total_steps, then cosine decay to zero. Continuous at the boundary.
double lr_at(long step, double base_lr, double warmup_ratio, long total_steps);

struct AdamWConfig {
  double base_lr = 4e-5;
  double weight_decay = 0.01;
  double warmup_ratio = 0.03;
  long total_steps = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam over a fixed parameter list. Moment buffers
// are keyed by position, so the caller must pass the same tensors in the
// same order on every step.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// One update over all params using their current .grad(). Throws
  /// NumericError before touching any state if a gradient contains NaN.
  void step(const std::vector<Tensor>& params);

  long step_count() const { return step_; }
  double last_lr() const { return last_lr_; }
  const AdamWConfig& config() const { return cfg_; }

  struct Moments {
    std::vector<double> m, v;
  };
  // Exposed for checkpointing.
  std::vector<Moments>& moments() { return moments_; }
  const std::vector<Moments>& moments() const { return moments_; }
  void restore(long step, std::vector<Moments> moments);

 private:
  AdamWConfig cfg_;
  long step_ = 0;
  double last_lr_ = 0.0;
  std::vector<Moments> moments_;
};

/// Max over coordinates of |analytic - central_fd| / max(1, |central_fd|),
/// taken over every input with requires_grad set. f must be scalar-valued
/// and is re-invoked define-by-run for every probe.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace nq
