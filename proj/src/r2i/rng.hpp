// Copyright (c) the r2i project authors.
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

#ifndef R2I_RNG_HPP_
#define R2I_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace r2i {

// Counter-based splitmix64 generator. Independent streams are derived by
// name or integer salt, so every stochastic site (initialization, the
// binarizer, batch sampling) can own a stream that does not depend on call
// order elsewhere in the program.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x7c15ea3b0f1bd68bULL)) {}

  // Derived stream: deterministic function of (current seed, name).
  Rng stream(std::string_view name) const {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : name) h = (h ^ ch) * 0x100000001b3ULL;
    return raw(mix(state_ ^ h));
  }

  Rng stream(uint64_t salt) const {
    return raw(mix(state_ ^ mix(salt + 0x9e3779b97f4a7c15ULL)));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return (next_u64() >> 40) * 0x1.0p-24f; }

  // Standard normal via Box-Muller. No spare caching, so draws stay a
  // pure function of the stream position.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  struct RawTag {};
  Rng(uint64_t s, RawTag) : state_(s) {}
  static Rng raw(uint64_t s) { return Rng(s, RawTag{}); }

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace r2i

#endif  // R2I_RNG_HPP_
