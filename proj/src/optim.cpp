// SPDX-License-Identifier: Apache-2.0
#include "nq/optim.hpp"

#include <cmath>

#include "nq/common.hpp"

namespace nq {

double lr_at(long step, double base_lr, double warmup_ratio, long total_steps) {
  if (total_steps <= 0) throw ConfigError("lr_at: total_steps must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0)
    throw ConfigError("lr_at: warmup_ratio outside [0, 1]");
  const long warmup_steps = std::lround(warmup_ratio * static_cast<double>(total_steps));
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return 0.0;
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double progress = span > 0.0 ? static_cast<double>(step - warmup_steps) / span : 1.0;
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void AdamW::step(const std::vector<Tensor>& params) {
  // Validate every gradient before mutating anything.
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& g = params[p].grad();
    for (double v : g)
      if (std::isnan(v))
        throw NumericError("AdamW: poisoned gradient (NaN) in parameter " + std::to_string(p) +
                           ", step aborted");
  }
  if (moments_.empty()) moments_.resize(params.size());
  if (moments_.size() != params.size())
    throw ConfigError("AdamW: parameter list size changed between steps");

  const long t = ++step_;
  const double lr = lr_at(t, cfg_.base_lr, cfg_.warmup_ratio, cfg_.total_steps);
  last_lr_ = lr;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& mom = moments_[p];
    auto& data = const_cast<Tensor&>(params[p]).data();
    const auto& g = params[p].grad();
    if (mom.m.empty()) {
      mom.m.assign(data.size(), 0.0);
      mom.v.assign(data.size(), 0.0);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * data[i]);
    }
  }
}

void AdamW::restore(long step, std::vector<Moments> moments) {
  step_ = step;
  moments_ = std::move(moments);
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double h) {
  for (auto& t : inputs) t.zero_grad();
  Tensor out = f(inputs);
  if (out.size() != 1)
    throw ConfigError("grad_check: function must be scalar-valued, got " + out.shape_str());
  out.backward();

  double max_err = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    // Unreachable inputs legitimately have no grad buffer: analytic zero.
    std::vector<double> analytic =
        t.grad_present() ? t.grad() : std::vector<double>(t.size(), 0.0);
    auto& data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double fp = f(inputs).value();
      data[i] = keep - h;
      const double fm = f(inputs).value();
      data[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace nq
