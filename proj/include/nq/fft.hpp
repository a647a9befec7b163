// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <vector>

namespace nq::fft {

/// Forward real-to-complex DFT, unnormalized; returns n/2+1 bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

/// Inverse of rfft for a signal of length n, normalized by 1/n.
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, std::size_t n);

/// Magnitude spectrum |rfft(x)|.
std::vector<double> magnitude(const std::vector<double>& x);

/// Frequency of bin k for a length-n signal at the given rate.
inline double bin_freq(std::size_t k, std::size_t n, double rate) {
  return static_cast<double>(k) * rate / static_cast<double>(n);
}

}  // namespace nq::fft
