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

#include "r2i/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "r2i/common.hpp"

namespace r2i {

uint8_t value_to_pixel(float v) {
  const float scaled = (v + 1.f) * 127.5f;
  int p = int(std::lround(double(scaled)));
  if (p < 0) p = 0;
  if (p > 255) p = 255;
  return uint8_t(p);
}

float pixel_to_value(uint8_t p) { return float(p) / 127.5f - 1.f; }

namespace {

// PPM header token: skips whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(ch));
  }
  return tok;
}

}  // namespace

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  if (next_token(in) != "P6")
    throw IoError("not a binary PPM (P6): " + path);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError("bad PPM header: " + path);
  }
  if (w < 1 || h < 1 || maxval != 255)
    throw IoError("unsupported PPM dimensions or maxval: " + path);
  std::vector<uint8_t> raw(size_t(3) * w * h);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (size_t(in.gcount()) != raw.size())
    throw IoError("truncated PPM payload: " + path);

  Image img = Image::filled(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = pixel_to_value(raw[(size_t(y) * w + x) * 3 + c]);
  return img;
}

void save_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(size_t(3) * img.width * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        raw[(size_t(y) * img.width + x) * 3 + c] =
            value_to_pixel(img.at(c, y, x));
  out.write(reinterpret_cast<const char*>(raw.data()),
            std::streamsize(raw.size()));
  if (!out) throw IoError("write failed: " + path);
}

Tensor image_window(const Image& img, int top, int left, int h, int w) {
  Tensor t = Tensor::zeros(Shape(1, 3, h, w));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y) {
      const int iy = top + y;
      if (iy < 0 || iy >= img.height) continue;
      for (int x = 0; x < w; ++x) {
        const int ix = left + x;
        if (ix < 0 || ix >= img.width) continue;
        t.at(0, c, y, x) = img.at(c, iy, ix);
      }
    }
  return t;
}

void blit_tensor(Image& img, const Tensor& t, int top, int left) {
  R2I_CHECK_ARG(t.shape().n == 1 && t.shape().c == 3,
                "blit_tensor: tensor must be (1,3,h,w)");
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.shape().h; ++y) {
      const int iy = top + y;
      if (iy < 0 || iy >= img.height) continue;
      for (int x = 0; x < t.shape().w; ++x) {
        const int ix = left + x;
        if (ix < 0 || ix >= img.width) continue;
        img.at(c, iy, ix) = t.at(0, c, y, x);
      }
    }
}

}  // namespace r2i
