// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace nq {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor / matrix dimension mismatches. Messages name both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or violated operation precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File, parse, and serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate situations: poisoned gradients, empty loss masks.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nq
