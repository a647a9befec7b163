// SPDX-License-Identifier: Apache-2.0
//
// Reference classifier for the synthetic tasks: per-channel log band-power
// features + multinomial logistic regression trained by plain gradient
// descent. Deliberately independent of the library's autodiff and model
// stack; it exists to prove dataset separability, not to share code.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nq/fft.hpp"
#include "nq/signal.hpp"

namespace nq::testsupport {

inline std::vector<double> bandpower_features(const EegRecording& rec,
                                              const std::vector<double>& freqs) {
  std::vector<double> feats;
  const std::size_t s = rec.length();
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    auto mag = fft::magnitude(rec.samples[c]);
    for (double f0 : freqs) {
      double power = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) {
        double f = fft::bin_freq(k, s, rec.sample_rate);
        if (std::abs(f - f0) <= 1.0) power += mag[k] * mag[k];
      }
      feats.push_back(std::log(power + 1e-12));
    }
  }
  return feats;
}

class LogisticOracle {
 public:
  void fit(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y,
           std::size_t n_classes, int epochs = 300, double lr = 0.5) {
    const std::size_t n = x.size(), d = x[0].size();
    standardize_fit(x);
    w_.assign(n_classes, std::vector<double>(d + 1, 0.0));
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::vector<std::vector<double>> grad(n_classes, std::vector<double>(d + 1, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        auto xi = transform(x[i]);
        auto p = predict_proba(xi);
        for (std::size_t k = 0; k < n_classes; ++k) {
          double delta = p[k] - (y[i] == k ? 1.0 : 0.0);
          for (std::size_t j = 0; j < d; ++j) grad[k][j] += delta * xi[j];
          grad[k][d] += delta;
        }
      }
      for (std::size_t k = 0; k < n_classes; ++k)
        for (std::size_t j = 0; j <= d; ++j) w_[k][j] -= lr * grad[k][j] / static_cast<double>(n);
    }
  }

  std::size_t predict(const std::vector<double>& x) const {
    auto p = predict_proba(transform(x));
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }

  double accuracy(const std::vector<std::vector<double>>& x,
                  const std::vector<std::size_t>& y) const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (predict(x[i]) == y[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(x.size());
  }

 private:
  void standardize_fit(const std::vector<std::vector<double>>& x) {
    const std::size_t d = x[0].size();
    mean_.assign(d, 0.0);
    std_.assign(d, 0.0);
    for (const auto& row : x)
      for (std::size_t j = 0; j < d; ++j) mean_[j] += row[j] / static_cast<double>(x.size());
    for (const auto& row : x)
      for (std::size_t j = 0; j < d; ++j)
        std_[j] += (row[j] - mean_[j]) * (row[j] - mean_[j]) / static_cast<double>(x.size());
    for (auto& v : std_) v = std::sqrt(v) + 1e-9;
  }

  std::vector<double> transform(const std::vector<double>& x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean_[j]) / std_[j];
    return out;
  }

  std::vector<double> predict_proba(const std::vector<double>& x) const {
    std::vector<double> logits(w_.size());
    for (std::size_t k = 0; k < w_.size(); ++k) {
      double z = w_[k].back();
      for (std::size_t j = 0; j < x.size(); ++j) z += w_[k][j] * x[j];
      logits[k] = z;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& v : logits) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : logits) v /= sum;
    return logits;
  }

  std::vector<std::vector<double>> w_;
  std::vector<double> mean_, std_;
};

/// Train/test the oracle on one synthetic task; returns held-out accuracy.
inline double synth_oracle_accuracy(const SynthSpec& spec) {
  auto recs = synth_task(spec);
  std::vector<double> freqs;
  for (std::size_t k = 0; k < spec.n_classes; ++k)
    freqs.push_back(synth_class_freq(spec.family, k, spec.freq_shift));

  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    x.push_back(bandpower_features(recs[i], freqs));
    y.push_back(i % spec.n_classes);  // generator ordering is round-robin
  }
  const std::size_t split = recs.size() * 3 / 4;
  std::vector<std::vector<double>> xtr(x.begin(), x.begin() + split);
  std::vector<std::size_t> ytr(y.begin(), y.begin() + split);
  std::vector<std::vector<double>> xte(x.begin() + split, x.end());
  std::vector<std::size_t> yte(y.begin() + split, y.end());

  LogisticOracle clf;
  clf.fit(xtr, ytr, spec.n_classes);
  return clf.accuracy(xte, yte);
}

}  // namespace nq::testsupport
