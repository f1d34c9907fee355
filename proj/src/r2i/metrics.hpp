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

#ifndef R2I_METRICS_HPP_
#define R2I_METRICS_HPP_

#include <string>
#include <vector>

#include "r2i/codec.hpp"
#include "r2i/image.hpp"

namespace r2i {

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// valid window positions, channels averaged. Data is in [-1,1], so the
// dynamic range is 2.
double ssim(const Image& a, const Image& b);

// Same on planar channel data (c planes of h*w).
double ssim_planes(const float* a, const float* b, int channels, int h, int w);

// Multi-scale SSIM, up to 5 dyadic scales (2x2-mean downsampling) with
// weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333). Images too small for
// the full form use as many scales as fit (min side >= 11 per scale) with
// the weight prefix renormalized to sum 1.
double ms_ssim(const Image& a, const Image& b);

// -10*log10(1 - v), saturated at 100 dB.
double ms_ssim_db(double v);

enum class Metric { kSsim, kMsSsim };

struct RDPoint {
  double bpp = 0;
  double distortion = 0;
};

// Rate-distortion curve; bpp strictly increasing.
struct RDCurve {
  Metric metric = Metric::kMsSsim;
  std::vector<RDPoint> points;
};

// Average bit-rate reduction of `test` against `reference` (percent,
// positive when `test` spends fewer bits at equal distortion): cubic fits
// of log10(bpp) against distortion, integrated over the overlapping
// distortion interval. Both curves need >= 4 points.
double bd_rate_savings(const RDCurve& reference, const RDCurve& test);

// One RD point per decodable stage, averaged over the image set. Rates come
// from actual payload byte counts over the padded pixel grid, so stage s of
// an uncoupled stream sits at exactly 0.125*s bpp.
RDCurve rd_sweep(Model& model, InpaintNet* net,
                 const std::vector<Image>& images, int stages,
                 const std::array<uint8_t, 8>& digest, Metric metric);

// Mean SSIM of predicted vs. true patches over every non-overlapping 32x32
// patch, contexts assembled from original pixels.
double inpainting_eval(InpaintNet& net, const std::vector<Image>& images);

void write_rd_csv(const std::string& path, const RDCurve& curve);
RDCurve read_rd_csv(const std::string& path);

const char* metric_name(Metric m);

}  // namespace r2i

#endif  // R2I_METRICS_HPP_
