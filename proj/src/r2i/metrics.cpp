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

#include "r2i/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "r2i/common.hpp"

namespace r2i {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kRange = 2.0;  // data lives in [-1,1]
constexpr double kC1 = (0.01 * kRange) * (0.01 * kRange);
constexpr double kC2 = (0.03 * kRange) * (0.03 * kRange);

const std::vector<double>& gaussian_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kWin);
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      w[size_t(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
      sum += w[size_t(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return win;
}

// Separable Gaussian filter, valid region only: (h-10) x (w-10).
void filter_valid(const std::vector<double>& src, int h, int w,
                  std::vector<double>& dst) {
  const auto& win = gaussian_window();
  const int vw = w - kWin + 1, vh = h - kWin + 1;
  std::vector<double> rows(size_t(h) * vw);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += win[size_t(k)] * src[size_t(y) * w + x + k];
      rows[size_t(y) * vw + x] = acc;
    }
  dst.assign(size_t(vh) * vw, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += win[size_t(k)] * rows[size_t(y + k) * vw + x];
      dst[size_t(y) * vw + x] = acc;
    }
}

struct ChannelStats {
  double mean_ssim = 0;  // full SSIM over valid windows
  double mean_cs = 0;    // contrast-structure term only
  double mean_l = 0;     // luminance term only
};

ChannelStats ssim_channel(const float* a, const float* b, int h, int w) {
  R2I_CHECK_ARG(h >= kWin && w >= kWin,
                "ssim: image smaller than the 11x11 window");
  const size_t plane = size_t(h) * w;
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  for (size_t i = 0; i < plane; ++i) {
    x[i] = a[i];
    y[i] = b[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  std::vector<double> mx, my, mxx, myy, mxy;
  filter_valid(x, h, w, mx);
  filter_valid(y, h, w, my);
  filter_valid(xx, h, w, mxx);
  filter_valid(yy, h, w, myy);
  filter_valid(xy, h, w, mxy);

  ChannelStats st;
  const size_t n = mx.size();
  for (size_t i = 0; i < n; ++i) {
    const double mu_x = mx[i], mu_y = my[i];
    const double var_x = mxx[i] - mu_x * mu_x;
    const double var_y = myy[i] - mu_y * mu_y;
    const double cov = mxy[i] - mu_x * mu_y;
    const double l = (2 * mu_x * mu_y + kC1) / (mu_x * mu_x + mu_y * mu_y + kC1);
    const double cs = (2 * cov + kC2) / (var_x + var_y + kC2);
    st.mean_ssim += l * cs;
    st.mean_cs += cs;
    st.mean_l += l;
  }
  st.mean_ssim /= double(n);
  st.mean_cs /= double(n);
  st.mean_l /= double(n);
  return st;
}

void downsample2x( std::vector<float>& plane, int& h, int& w) {
  const int nh = h / 2, nw = w / 2;
  std::vector<float> out(size_t(nh) * nw);
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x) {
      const double s = double(plane[size_t(2 * y) * w + 2 * x]) +
                       plane[size_t(2 * y) * w + 2 * x + 1] +
                       plane[size_t(2 * y + 1) * w + 2 * x] +
                       plane[size_t(2 * y + 1) * w + 2 * x + 1];
      out[size_t(y) * nw + x] = float(s * 0.25);
    }
  plane = std::move(out);
  h = nh;
  w = nw;
}

const double kMsWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

int scales_for(int h, int w) {
  int m = 0;
  int side = std::min(h, w);
  while (m < 5 && side >= kWin) {
    ++m;
    side /= 2;
  }
  return m;
}

double ms_ssim_channel(const float* a, const float* b, int h, int w) {
  const int scales = scales_for(h, w);
  R2I_CHECK_ARG(scales >= 1, "ms_ssim: image smaller than the 11x11 window");
  double weight_sum = 0;
  for (int j = 0; j < scales; ++j) weight_sum += kMsWeights[j];

  std::vector<float> pa(a, a + size_t(h) * w), pb(b, b + size_t(h) * w);
  int ch = h, cw = w;
  double value = 1.0;
  for (int j = 0; j < scales; ++j) {
    ChannelStats st = ssim_channel(pa.data(), pb.data(), ch, cw);
    const double wj = kMsWeights[j] / weight_sum;
    if (j + 1 < scales) {
      value *= std::pow(std::max(st.mean_cs, 0.0), wj);
      int h2 = ch, w2 = cw;
      downsample2x(pa, h2, w2);
      downsample2x(pb, ch, cw);
    } else {
      value *= std::pow(std::max(st.mean_cs, 0.0), wj) *
               std::pow(std::max(st.mean_l, 0.0), wj);
    }
  }
  return value;
}

}  // namespace

double ssim_planes(const float* a, const float* b, int channels, int h,
                   int w) {
  double total = 0;
  for (int c = 0; c < channels; ++c)
    total += ssim_channel(a + size_t(c) * h * w, b + size_t(c) * h * w, h, w)
                 .mean_ssim;
  return total / channels;
}

double ssim(const Image& a, const Image& b) {
  R2I_CHECK_ARG(a.width == b.width && a.height == b.height,
                "ssim: image dimensions differ");
  return ssim_planes(a.data.data(), b.data.data(), 3, a.height, a.width);
}

double ms_ssim(const Image& a, const Image& b) {
  R2I_CHECK_ARG(a.width == b.width && a.height == b.height,
                "ms_ssim: image dimensions differ");
  double total = 0;
  for (int c = 0; c < 3; ++c)
    total += ms_ssim_channel(a.data.data() + size_t(c) * a.height * a.width,
                             b.data.data() + size_t(c) * a.height * a.width,
                             a.height, a.width);
  return total / 3;
}

double ms_ssim_db(double v) {
  if (v >= 1.0) return 100.0;
  return std::min(-10.0 * std::log10(1.0 - v), 100.0);
}

const char* metric_name(Metric m) {
  return m == Metric::kSsim ? "ssim" : "msssim";
}

namespace {

// Least-squares cubic fit of y against centered/scaled x.
struct CubicFit {
  double coef[4] = {0, 0, 0, 0};
  double center = 0, scale = 1;

  double t(double x) const { return (x - center) / scale; }

  // Antiderivative in x of the fitted polynomial, evaluated at x.
  double integral(double x) const {
    const double u = t(x);
    const double p = coef[0] * u + coef[1] * u * u / 2 + coef[2] * u * u * u / 3 +
                     coef[3] * u * u * u * u / 4;
    return p * scale;
  }
};

CubicFit fit_log_rate(const RDCurve& c) {
  const size_t n = c.points.size();
  double lo = c.points.front().distortion, hi = lo;
  for (const auto& p : c.points) {
    lo = std::min(lo, p.distortion);
    hi = std::max(hi, p.distortion);
  }
  CubicFit fit;
  fit.center = (lo + hi) / 2;
  fit.scale = hi > lo ? (hi - lo) / 2 : 1.0;

  double ata[4][4] = {};
  double atb[4] = {};
  for (const auto& p : c.points) {
    R2I_CHECK_ARG(p.bpp > 0, "bd_rate: bpp must be positive");
    const double u = fit.t(p.distortion);
    const double rowv[4] = {1, u, u * u, u * u * u};
    const double y = std::log10(p.bpp);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) ata[i][j] += rowv[i] * rowv[j];
      atb[i] += rowv[i] * y;
    }
  }
  (void)n;
  // Gaussian elimination with partial pivoting.
  int perm[4] = {0, 1, 2, 3};
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(ata[r][col]) > std::abs(ata[piv][col])) piv = r;
    std::swap(ata[col], ata[piv]);
    std::swap(atb[col], atb[piv]);
    std::swap(perm[col], perm[piv]);
    R2I_CHECK_ARG(std::abs(ata[col][col]) > 1e-12,
                  "bd_rate: degenerate curve (distortions not distinct)");
    for (int r = col + 1; r < 4; ++r) {
      const double f = ata[r][col] / ata[col][col];
      for (int j = col; j < 4; ++j) ata[r][j] -= f * ata[col][j];
      atb[r] -= f * atb[col];
    }
  }
  for (int r = 3; r >= 0; --r) {
    double acc = atb[r];
    for (int j = r + 1; j < 4; ++j) acc -= ata[r][j] * fit.coef[j];
    fit.coef[r] = acc / ata[r][r];
  }
  return fit;
}

void check_curve(const RDCurve& c) {
  R2I_CHECK_ARG(c.points.size() >= 4, "bd_rate: need at least 4 points");
  for (size_t i = 1; i < c.points.size(); ++i)
    R2I_CHECK_ARG(c.points[i].bpp > c.points[i - 1].bpp,
                  "bd_rate: bpp must be strictly increasing");
}

}  // namespace

double bd_rate_savings(const RDCurve& reference, const RDCurve& test) {
  check_curve(reference);
  check_curve(test);
  R2I_CHECK_ARG(reference.metric == test.metric,
                "bd_rate: curves use different metrics");
  auto dist_range = [](const RDCurve& c) {
    double lo = c.points.front().distortion, hi = lo;
    for (const auto& p : c.points) {
      lo = std::min(lo, p.distortion);
      hi = std::max(hi, p.distortion);
    }
    return std::pair<double, double>(lo, hi);
  };
  const auto [rlo, rhi] = dist_range(reference);
  const auto [tlo, thi] = dist_range(test);
  const double lo = std::max(rlo, tlo), hi = std::min(rhi, thi);
  R2I_CHECK_ARG(hi > lo, "bd_rate: distortion ranges do not overlap");

  const CubicFit fr = fit_log_rate(reference);
  const CubicFit ft = fit_log_rate(test);
  const double mean_diff =
      ((ft.integral(hi) - ft.integral(lo)) - (fr.integral(hi) - fr.integral(lo))) /
      (hi - lo);
  return (1.0 - std::pow(10.0, mean_diff)) * 100.0;
}

RDCurve rd_sweep(Model& model, InpaintNet* net,
                 const std::vector<Image>& images, int stages,
                 const std::array<uint8_t, 8>& digest, Metric metric) {
  R2I_CHECK_ARG(!images.empty(), "rd_sweep: no images");
  const bool coupled = model.joint_head();
  const int first_stage = coupled ? 2 : 1;
  R2I_CHECK_ARG(stages >= first_stage, "rd_sweep: too few stages");

  RDCurve curve;
  curve.metric = metric;
  std::vector<double> sums(size_t(stages) + 1, 0.0);
  std::vector<double> bpp(size_t(stages) + 1, 0.0);

  for (const auto& img : images) {
    const std::vector<uint8_t> stream =
        encode_image(model, net, img, stages, digest);
    const BitstreamHeader h = parse_header(stream);
    const double pixels =
        double(h.patches_x()) * h.patches_y() * 32 * 32;
    for (int s = first_stage; s <= stages; ++s) {
      const Image recon = decode_image(model, net, stream, s, digest);
      const double d = metric == Metric::kSsim ? ssim(img, recon)
                                               : ms_ssim(img, recon);
      sums[size_t(s)] += d;
      const int units = coupled ? s - 1 : s;
      bpp[size_t(s)] = double(h.payload_bytes(units)) * 8.0 / pixels;
    }
  }
  for (int s = first_stage; s <= stages; ++s)
    curve.points.push_back(RDPoint{bpp[size_t(s)],
                                   sums[size_t(s)] / double(images.size())});
  return curve;
}

double inpainting_eval(InpaintNet& net, const std::vector<Image>& images) {
  R2I_CHECK_ARG(!images.empty(), "inpainting_eval: no images");
  double total = 0;
  size_t count = 0;
  for (const auto& img : images) {
    const int py = img.height / kPatchSize, px = img.width / kPatchSize;
    for (int pr = 0; pr < py; ++pr) {
      for (int pc = 0; pc < px; ++pc) {
        Tensor ctx = Tensor::zeros(Shape(1, 3, kContextSize, kContextSize));
        const int half = kContextSize - kPatchSize;
        Tensor window = image_window(img, pr * kPatchSize - half,
                                     pc * kPatchSize - half, kContextSize,
                                     kContextSize);
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < kContextSize; ++y)
            for (int x = 0; x < kContextSize; ++x)
              ctx.at(0, c, y, x) =
                  (y >= half && x >= half) ? 0.f : window.at(0, c, y, x);
        auto out = net.forward(nullptr, ctx, BnMode::kInfer);
        Tensor truth = image_window(img, pr * kPatchSize, pc * kPatchSize,
                                    kPatchSize, kPatchSize);
        total += ssim_planes(out.pred.data(), truth.data(), 3, kPatchSize,
                             kPatchSize);
        ++count;
      }
    }
  }
  R2I_CHECK_ARG(count > 0, "inpainting_eval: images smaller than one patch");
  return total / double(count);
}

void write_rd_csv(const std::string& path, const RDCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write RD csv: " + path);
  out << "bpp,metric,metric_db\n";
  out.precision(10);
  for (const auto& p : curve.points)
    out << p.bpp << "," << p.distortion << "," << ms_ssim_db(p.distortion)
        << "\n";
}

RDCurve read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open RD csv: " + path);
  RDCurve curve;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string bpp_s, metric_s;
    if (!std::getline(ss, bpp_s, ',') || !std::getline(ss, metric_s, ','))
      throw CorruptError("bad RD csv row: " + line);
    try {
      curve.points.push_back(RDPoint{std::stod(bpp_s), std::stod(metric_s)});
    } catch (const std::exception&) {
      throw CorruptError("bad RD csv row: " + line);
    }
  }
  return curve;
}

}  // namespace r2i
