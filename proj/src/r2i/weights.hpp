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

#ifndef R2I_WEIGHTS_HPP_
#define R2I_WEIGHTS_HPP_

#include <array>
#include <cstdint>
#include <string>

#include "r2i/params.hpp"

namespace r2i {

// Weight-file kind tags. kIr2i bundles a decoding-connection model with the
// inpainting network in one parameter set.
enum class WeightKind : uint8_t {
  kResidual = 0,
  kPrediction = 1,
  kFull = 2,
  kDecoding = 3,
  kIr2i = 4,
  kInpaint = 5,
  kVanilla = 6,
};

const char* weight_kind_name(WeightKind k);

struct WeightFile {
  WeightKind kind = WeightKind::kResidual;
  uint8_t stages = 0;
  uint64_t seed = 0;
  ParamSet params;
};

// Versioned container: magic "R2IW", version byte, kind tag, stage count,
// seed, then one record per tensor (name, shape, raw little-endian f32).
// Round-trips are bit-exact.
void save_weights(const std::string& path, const WeightFile& file);
WeightFile load_weights(const std::string& path);

// First 8 bytes of SHA-256 over the whole file; pins a bitstream to the
// exact weights that produced it.
std::array<uint8_t, 8> weight_digest(const std::string& path);

}  // namespace r2i

#endif  // R2I_WEIGHTS_HPP_
