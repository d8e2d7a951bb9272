// Copyright 2026 The exitwise Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EXITWISE_RNG_HPP
#define EXITWISE_RNG_HPP

// Self-contained random number generation. Everything that randomizes in this
// library goes through these routines so that results are bit-reproducible
// across standard libraries and platforms (std::*_distribution makes no such
// guarantee).

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace exitwise {

// splitmix64 step (Steele, Lea, Flood). State update + output mix.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Hashes (seed, path...) into a new 64-bit seed. Used to give every frame,
// pair and training phase its own independent stream without shared state.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = seed;
  (void)splitmix64_next(s);
  for (std::uint64_t p : path) {
    s ^= 0xD1B54A32D192ED03ULL * (p + 1);
    (void)splitmix64_next(s);
  }
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // One uniform random bit, drawn from a buffered 64-bit word.
  int bit() {
    if (bits_left_ == 0) {
      bit_buffer_ = next_u64();
      bits_left_ = 64;
    }
    const int b = static_cast<int>(bit_buffer_ & 1U);
    bit_buffer_ >>= 1;
    --bits_left_;
    return b;
  }

  // Uniform integer in [0, n) by rejection, bias-free.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::uint64_t bit_buffer_ = 0;
  int bits_left_ = 0;
};

}  // namespace exitwise

#endif  // EXITWISE_RNG_HPP
