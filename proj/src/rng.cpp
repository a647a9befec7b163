// SPDX-License-Identifier: Apache-2.0
#include "nq/rng.hpp"

#include <cmath>
#include <sstream>

#include "nq/common.hpp"

namespace nq {

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  return fnv1a(s.data(), s.size(), h);
}

Rng Rng::fork(const std::string& tag) const {
  // Hash the engine state together with the tag so forks of forks stay distinct.
  std::ostringstream os;
  os << engine_;
  std::uint64_t h = fnv1a(os.str());
  h = fnv1a(tag, h);
  return Rng(h);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r(0);
  std::istringstream is(text);
  is >> r.engine_;
  if (is.fail()) throw IoError("Rng::deserialize: malformed engine state");
  return r;
}

}  // namespace nq
