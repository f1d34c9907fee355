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

#ifndef R2I_TESTS_SUPPORT_HELPERS_HPP_
#define R2I_TESTS_SUPPORT_HELPERS_HPP_

#include <cmath>
#include <vector>

#include "r2i/image.hpp"
#include "r2i/rng.hpp"
#include "r2i/tensor.hpp"

namespace r2i::test {

template <typename S = float>
TensorT<S> rand_uniform(Shape shape, Rng rng, double lo = -1.0,
                        double hi = 1.0) {
  TensorT<S> t = TensorT<S>::zeros(shape);
  for (int64_t i = 0; i < t.count(); ++i)
    t.data()[i] = S(lo + (hi - lo) * rng.next_double());
  return t;
}

template <typename S = float>
TensorT<S> rand_gaussian(Shape shape, Rng rng, double stddev = 1.0) {
  TensorT<S> t = TensorT<S>::zeros(shape);
  for (int64_t i = 0; i < t.count(); ++i)
    t.data()[i] = S(stddev * rng.next_gaussian());
  return t;
}

// Smooth procedural image: random low-frequency cosine waves plus a linear
// ramp, normalized into [-1,1]. Spatially coherent, so context carries
// information about the patch to predict.
inline Image synth_image(int width, int height, Rng rng) {
  Image img = Image::filled(width, height);
  const int waves = 4;
  struct Wave {
    double fx, fy, phase, amp;
  };
  for (int c = 0; c < 3; ++c) {
    std::vector<Wave> ws;
    for (int k = 0; k < waves; ++k) {
      ws.push_back(Wave{(rng.next_double() * 2 - 1) * 4.0 / width,
                        (rng.next_double() * 2 - 1) * 4.0 / height,
                        rng.next_double() * 6.28318,
                        0.5 + 0.5 * rng.next_double()});
    }
    const double gx = (rng.next_double() * 2 - 1) / width;
    const double gy = (rng.next_double() * 2 - 1) / height;
    double lo = 1e30, hi = -1e30;
    std::vector<double> plane(size_t(width) * height);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double v = gx * x + gy * y;
        for (const auto& w : ws)
          v += w.amp * std::cos(6.28318 * (w.fx * x + w.fy * y) + w.phase);
        plane[size_t(y) * width + x] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const double scale = hi > lo ? 1.8 / (hi - lo) : 1.0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        img.at(c, y, x) =
            float((plane[size_t(y) * width + x] - lo) * scale - 0.9);
  }
  return img;
}

inline std::vector<Image> synth_corpus(int count, int width, int height,
                                       uint64_t seed) {
  std::vector<Image> images;
  Rng root(seed);
  for (int i = 0; i < count; ++i)
    images.push_back(synth_image(width, height, root.stream(uint64_t(i))));
  return images;
}

}  // namespace r2i::test

#endif  // R2I_TESTS_SUPPORT_HELPERS_HPP_
