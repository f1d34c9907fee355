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

#ifndef R2I_CODEC_HPP_
#define R2I_CODEC_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "r2i/image.hpp"
#include "r2i/inpaint.hpp"
#include "r2i/model.hpp"

namespace r2i {

// Bitstream layout (".r2i"): a 21-byte header followed by per-unit payload.
//
//   offset size  field
//   0      4     magic "R2IC"
//   4      1     format version (1)
//   5      2     original image width  (LE)
//   7      2     original image height (LE)
//   9      1     patch size (32)
//   10     1     stage count S
//   11     1     connection kind tag (0..3)
//   12     8     weight digest (first 8 bytes of SHA-256 of the weight file)
//   20     1     flags; bit0 = inpainting-coupled stream
//
// Payload: one unit after another, each unit holding every patch in raster
// order. A unit carries one stage's 128-bit code per patch (16 bytes),
// except the first unit of an inpainting-coupled stream, which carries
// stages 1 and 2 together (32 bytes per patch). Bits are packed MSB-first
// in (channel, row, column) order, +1 -> 1.
struct BitstreamHeader {
  uint8_t version = 1;
  uint16_t width = 0;   // original dims; padded dims are the next multiples of 32
  uint16_t height = 0;
  uint8_t patch_size = 32;
  uint8_t stages = 0;
  uint8_t kind_tag = 0;
  std::array<uint8_t, 8> digest{};
  uint8_t flags = 0;

  bool inpainting_coupled() const { return (flags & 1) != 0; }
  int patches_x() const { return (width + 31) / 32; }
  int patches_y() const { return (height + 31) / 32; }
  int patch_count() const { return patches_x() * patches_y(); }
  int units() const { return inpainting_coupled() ? stages - 1 : stages; }
  size_t unit_bytes(int unit) const {  // 1-based
    return size_t(patch_count()) * (inpainting_coupled() && unit == 1 ? 32 : 16);
  }
  size_t payload_bytes(int up_to_unit) const {
    size_t total = 0;
    for (int u = 1; u <= up_to_unit; ++u) total += unit_bytes(u);
    return total;
  }
};

inline constexpr size_t kHeaderBytes = 21;
inline constexpr size_t kStageCodeBytes = 16;  // 128 bits per patch per stage

std::vector<uint8_t> serialize_header(const BitstreamHeader& h);
BitstreamHeader parse_header(const std::vector<uint8_t>& bytes);

// {-1,+1} codes <-> packed bytes, MSB-first, +1 -> bit 1.
std::vector<uint8_t> pack_bits(const Tensor& code);
Tensor unpack_bits(const uint8_t* bytes, size_t n_bytes, Shape shape);

// Replicate-pads right/bottom to multiples of the patch size.
Image pad_image(const Image& img);

// 64x64 context window for the patch at (patch_row, patch_col): the three
// quadrants above/left come from the canvas, the bottom-right quadrant (the
// patch itself) is zero, as is anything outside the canvas.
Tensor assemble_context(const Image& canvas, int patch_row, int patch_col);

// Optional capture of internals for verification.
struct CodecTrace {
  std::vector<Tensor> contexts;      // per patch, raster order
  std::vector<Image> stage_recons;   // reconstruction after each stage (padded)
};

// Deterministic encode. For inpainting-coupled models (joint head + net),
// the first two stages run in raster order against contexts assembled from
// stage-2 reconstructions; later stages have no inter-patch dependence.
std::vector<uint8_t> encode_image(Model& model, InpaintNet* net,
                                  const Image& img, int stages_out,
                                  const std::array<uint8_t, 8>& digest,
                                  CodecTrace* trace = nullptr);

// Decodes the first `up_to_stage` stages; reads exactly the header plus the
// needed units (reported via consumed, when given) and reproduces the
// encoder-side reconstruction bit-exactly.
Image decode_image(Model& model, InpaintNet* net,
                   const std::vector<uint8_t>& bytes, int up_to_stage,
                   const std::array<uint8_t, 8>& expected_digest,
                   size_t* consumed = nullptr, CodecTrace* trace = nullptr);

}  // namespace r2i

#endif  // R2I_CODEC_HPP_
