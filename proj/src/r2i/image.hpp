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

#ifndef R2I_IMAGE_HPP_
#define R2I_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "r2i/tensor.hpp"

namespace r2i {

// Planar RGB image in [-1,1] floats (channel, row, column order).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // 3 * height * width

  float& at(int c, int y, int x) {
    return data[(size_t(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(size_t(c) * height + y) * width + x];
  }

  static Image filled(int w, int h, float v = 0.f) {
    Image img;
    img.width = w;
    img.height = h;
    img.data.assign(size_t(3) * w * h, v);
    return img;
  }
};

// [-1,1] <-> 8-bit, round half away from zero, clamped.
uint8_t value_to_pixel(float v);
float pixel_to_value(uint8_t p);

// Binary PPM (P6, maxval 255).
Image load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Image& img);

// (1,3,h,w) tensor view of a rectangular region; out-of-bounds area reads 0.
Tensor image_window(const Image& img, int top, int left, int h, int w);

// Writes a (1,3,h,w) tensor into the image at (top, left), clipped.
void blit_tensor(Image& img, const Tensor& t, int top, int left);

}  // namespace r2i

#endif  // R2I_IMAGE_HPP_
