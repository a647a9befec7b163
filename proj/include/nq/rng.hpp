// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace nq {

// Deterministic random stream. Wraps mt19937_64 but generates uniforms and
// gaussians from raw engine words so sequences are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no spare caching, so state is just the engine).
  double gaussian() {
    double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t integer(std::uint64_t n) { return engine_() % n; }

  std::vector<double> gaussians(std::size_t n, double std_dev) {
    std::vector<double> out(n);
    for (auto& v : out) v = gaussian() * std_dev;
    return out;
  }

  /// Fisher-Yates over indices [0, n).
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  /// Derive an independent stream for a named purpose.
  Rng fork(const std::string& tag) const;

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a over arbitrary bytes; used for stream derivation and weight fingerprints.
std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 1469598103934665603ULL);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL);

}  // namespace nq
