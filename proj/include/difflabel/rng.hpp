// Copyright 2026 The difflabel Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace difflabel {

/// Counter-based generator: the n-th draw of a stream is a pure function of
/// (key, n), so any draw can be reproduced without replaying the stream and
/// independent streams can be derived for parallel work.
///
/// Each 64-bit output is the SplitMix64 finalizer applied to
/// key + (n + 1) * golden_gamma. All derived quantities (signs, uniforms,
/// normals) are computed here rather than through <random> distributions,
/// whose outputs are implementation-defined.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ kSeedSalt)) {}

  /// Independent stream `index` under root `seed`.
  static CounterRng stream(std::uint64_t seed, std::uint64_t index) {
    return CounterRng(seed).fork(index);
  }

  CounterRng fork(std::uint64_t index) const {
    CounterRng child(0);
    child.key_ = mix(key_ ^ mix(index + kGamma));
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * kGamma);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// -1 or +1 with equal probability (one draw).
  int sign() { return (next_u64() >> 63) != 0 ? 1 : -1; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n); rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t draws() const { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedSalt = 0xD1B54A32D192ED03ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace difflabel
