// Copyright 2026 the ragpoison authors
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
#include <random>
#include <string>
#include <string_view>

namespace ragpoison {

// All randomness in the library flows through the two primitives below.
// Both are fully specified here (no standard-library distributions), so
// fixtures reproduce bit-for-bit across platforms and compilers.

/// FNV-1a 64-bit over bytes. Stable, documented, never process-seeded.
inline constexpr std::uint64_t fnv1a(std::string_view bytes,
                                     std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Combines an existing hash with another string, separator included so
/// ("ab","c") and ("a","bc") hash differently.
inline constexpr std::uint64_t fnv1a_combine(std::uint64_t h, std::string_view bytes) {
  h ^= 0x1f;
  h *= 1099511628211ull;
  return fnv1a(bytes, h);
}

/// splitmix64: tiny counter-based generator used for embedding directions
/// and mock text variation. One call advances the state by a fixed amount.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in (0, 1]; never returns exactly 0 so log() is safe.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller, computed explicitly for portability.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Seeded RNG for harness-level draws (model/template selection, tau
/// sampling). Backed by mt19937_64, whose output sequence is fixed by the
/// standard; bounded draws use plain modulo so no library distribution is
/// involved.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform index in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) { return next_u64() % n; }

  /// Independent stream for (seed, label), e.g. one per target case.
  static SeededRng derived(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = fnv1a("ragpoison.rng");
    h ^= seed;
    h *= 1099511628211ull;
    return SeededRng(fnv1a_combine(h, label));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ragpoison
