// Copyright 2026 The uncertseg Authors
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

#pragma once

#include <array>
#include <cstdint>

namespace uncertseg {

/// SplitMix64 finalizer. Used for seeding and for deriving sub-streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic xoshiro256** generator seeded through SplitMix64.
///
/// The integer state path is fully portable; floats are derived from the top
/// bits of the 64-bit output, so identical seeds produce identical sequences
/// on every platform. `draws()` counts 64-bit outputs consumed so far.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Sub-stream `index` of a root seed: Rng(mix(root) ^ index).
  static Rng stream(std::uint64_t root, std::uint64_t index);

  /// Combines several integers into one seed (order-sensitive).
  static std::uint64_t derive(std::uint64_t root, std::uint64_t a,
                              std::uint64_t b = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 24 bits of resolution.
  float uniform();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform_double();
  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller. Consumes two 64-bit draws per pair.
  double normal();
  bool bernoulli(double p) { return uniform_double() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uncertseg
