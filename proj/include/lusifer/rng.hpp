// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace lusifer {

// Deterministic PRNG (xoshiro256**) with hand-rolled distributions so that
// streams do not depend on the standard library implementation. Every
// stochastic choice in the project flows through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double next_double();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller.
  double normal(double mean = 0.0, double stddev = 1.0);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // Derived independent stream, stable across runs.
  Rng fork(std::string_view tag) const;

 private:
  std::uint64_t s_[4];
};

// Stable seed derivation for named sub-streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace lusifer
