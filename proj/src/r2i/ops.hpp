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

#ifndef R2I_OPS_HPP_
#define R2I_OPS_HPP_

#include <cmath>
#include <cstring>
#include <vector>

#include "r2i/common.hpp"
#include "r2i/gemm.hpp"
#include "r2i/rng.hpp"
#include "r2i/tape.hpp"
#include "r2i/tensor.hpp"

namespace r2i {

enum class NonLin { kNone, kRelu, kTanh };

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int pad = 0;
  bool has_bias = true;

  int out_dim(int in) const {
    return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
  }
};

enum class BinarizerMode { kStochastic, kDeterministic };
enum class BnMode { kTrain, kInfer };

namespace detail {

// col layout: (C*k*k) rows by (OH*OW) columns for one sample.
template <typename S>
void im2col(const S* src, int c, int h, int w, const ConvSpec& sp, int oh,
            int ow, S* col) {
  const int k = sp.kernel;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* dst = col + ((size_t(ch) * k + ky) * k + kx) * (size_t(oh) * ow);
        const int base_y = ky * sp.dilation - sp.pad;
        const int base_x = kx * sp.dilation - sp.pad;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = base_y + oy * sp.stride;
          if (iy < 0 || iy >= h) {
            std::memset(dst + size_t(oy) * ow, 0, sizeof(S) * ow);
            continue;
          }
          const S* row = src + (size_t(ch) * h + iy) * w;
          if (sp.stride == 1) {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = base_x + ox;
              dst[size_t(oy) * ow + ox] = (ix >= 0 && ix < w) ? row[ix] : S(0);
            }
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = base_x + ox * sp.stride;
              dst[size_t(oy) * ow + ox] = (ix >= 0 && ix < w) ? row[ix] : S(0);
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* col, int c, int h, int w, const ConvSpec& sp, int oh,
                int ow, S* dst) {
  const int k = sp.kernel;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* src = col + ((size_t(ch) * k + ky) * k + kx) * (size_t(oh) * ow);
        const int base_y = ky * sp.dilation - sp.pad;
        const int base_x = kx * sp.dilation - sp.pad;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = base_y + oy * sp.stride;
          if (iy < 0 || iy >= h) continue;
          S* row = dst + (size_t(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = base_x + ox * sp.stride;
            if (ix >= 0 && ix < w) row[ix] += src[size_t(oy) * ow + ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvSpec& sp) {
  return sp.kernel == 1 && sp.stride == 1 && sp.pad == 0 && sp.dilation == 1;
}

}  // namespace detail

// Cross-correlation with stride/dilation and zero padding. Weights are
// (F, C, k, k); the optional bias is one value per filter.
template <typename S>
TensorT<S> conv2d(TapeT<S>* tape, const TensorT<S>& x, const ConvSpec& spec,
                  TensorT<S> w, TensorT<S> bias) {
  R2I_CHECK_ARG(x.shape().c == spec.in_channels,
                "conv2d: input has " + std::to_string(x.shape().c) +
                    " channels, spec expects " +
                    std::to_string(spec.in_channels));
  R2I_CHECK_ARG(w.shape() == Shape(spec.out_channels, spec.in_channels,
                                   spec.kernel, spec.kernel),
                "conv2d: weight shape mismatch " + w.shape().str());
  R2I_CHECK_ARG(spec.has_bias == !bias.empty(), "conv2d: bias presence");

  const int n = x.shape().n, c = x.shape().c, h = x.shape().h, wd = x.shape().w;
  const int out_h = spec.out_dim(h), out_w = spec.out_dim(wd);
  R2I_CHECK_ARG(out_h >= 1 && out_w >= 1, "conv2d: empty output");
  const int f = spec.out_channels;
  const int kk = spec.in_channels * spec.kernel * spec.kernel;
  const size_t plane = size_t(out_h) * out_w;

  TensorT<S> out = TensorT<S>::zeros(Shape(n, f, out_h, out_w));
  std::vector<S> col;
  const bool pointwise = detail::is_pointwise(spec);
  if (!pointwise) col.resize(size_t(kk) * plane);

  for (int i = 0; i < n; ++i) {
    const S* src = x.data() + size_t(i) * c * h * wd;
    const S* rhs = src;
    if (!pointwise) {
      detail::im2col(src, c, h, wd, spec, out_h, out_w, col.data());
      rhs = col.data();
    }
    S* dst = out.data() + size_t(i) * f * plane;
    gemm(false, false, f, int(plane), kk, S(1), w.data(), kk, rhs, int(plane),
         S(0), dst, int(plane));
    if (spec.has_bias) {
      for (int j = 0; j < f; ++j) {
        const S b = bias.data()[j];
        S* row = dst + size_t(j) * plane;
        for (size_t p = 0; p < plane; ++p) row[p] += b;
      }
    }
  }

  if (tape) {
    TensorT<S> xx = x;
    tape->record("conv2d", out, [xx, w, bias, spec, out]() mutable {
      const int n = xx.shape().n, c = xx.shape().c;
      const int h = xx.shape().h, wd = xx.shape().w;
      const int out_h = out.shape().h, out_w = out.shape().w;
      const int f = spec.out_channels;
      const int kk = spec.in_channels * spec.kernel * spec.kernel;
      const size_t plane = size_t(out_h) * out_w;
      const bool pointwise = detail::is_pointwise(spec);

      const S* gout = out.grad();
      S* gw = w.grad();
      S* gx = xx.grad();
      std::vector<S> col, gcol(size_t(kk) * plane);
      if (!pointwise) col.resize(size_t(kk) * plane);

      for (int i = 0; i < n; ++i) {
        const S* src = xx.data() + size_t(i) * c * h * wd;
        const S* rhs = src;
        if (!pointwise) {
          detail::im2col(src, c, h, wd, spec, out_h, out_w, col.data());
          rhs = col.data();
        }
        const S* gy = gout + size_t(i) * f * plane;
        // dW += dY * col^T
        gemm(false, true, f, kk, int(plane), S(1), gy, int(plane), rhs,
             int(plane), S(1), gw, kk);
        // dcol = W^T * dY
        gemm(true, false, kk, int(plane), f, S(1), w.data(), kk, gy,
             int(plane), S(0), gcol.data(), int(plane));
        S* gdst = gx + size_t(i) * c * h * wd;
        if (pointwise) {
          for (size_t p = 0; p < size_t(kk) * plane; ++p) gdst[p] += gcol[p];
        } else {
          detail::col2im_add(gcol.data(), c, h, wd, spec, out_h, out_w, gdst);
        }
      }
      if (spec.has_bias) {
        S* gb = bias.grad();
        for (int i = 0; i < n; ++i) {
          const S* gy = gout + size_t(i) * f * plane;
          for (int j = 0; j < f; ++j) {
            double acc = 0;
            const S* row = gy + size_t(j) * plane;
            for (size_t p = 0; p < plane; ++p) acc += row[p];
            gb[j] += S(acc);
          }
        }
      }
    });
  }
  return out;
}

// Transposed convolution, fixed 2x2 kernel and stride 2; output is exactly
// (2H, 2W). Weights are (C_in, C_out/groups, 2, 2); no bias. groups must
// divide both channel counts; groups == channels gives the depthwise form.
template <typename S>
TensorT<S> deconv2d(TapeT<S>* tape, const TensorT<S>& x, TensorT<S> w,
                    int out_channels, int groups) {
  const int n = x.shape().n, c = x.shape().c, h = x.shape().h,
            wd = x.shape().w;
  R2I_CHECK_ARG(groups >= 1 && c % groups == 0 && out_channels % groups == 0,
                "deconv2d: groups must divide channel counts");
  const int cpg = c / groups;           // input channels per group
  const int fpg = out_channels / groups;  // output channels per group
  R2I_CHECK_ARG(w.shape() == Shape(c, fpg, 2, 2),
                "deconv2d: weight shape must be (C_in, C_out/groups, 2, 2), got " +
                    w.shape().str() + " for " + std::to_string(c) + "->" +
                    std::to_string(out_channels) + " groups " +
                    std::to_string(groups));

  TensorT<S> out = TensorT<S>::zeros(Shape(n, out_channels, 2 * h, 2 * wd));
  const int oh = 2 * h, ow = 2 * wd;
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < groups; ++g) {
      for (int ic = 0; ic < cpg; ++ic) {
        const int cin = g * cpg + ic;
        const S* src = x.data() + ((size_t(i) * c + cin) * h) * wd;
        for (int oc = 0; oc < fpg; ++oc) {
          const int cout = g * fpg + oc;
          const S* kw = w.data() + ((size_t(cin) * fpg + oc) * 2) * 2;
          S* dst = out.data() + ((size_t(i) * out_channels + cout) * oh) * ow;
          for (int y = 0; y < h; ++y) {
            const S* srow = src + size_t(y) * wd;
            S* d0 = dst + size_t(2 * y) * ow;
            S* d1 = d0 + ow;
            for (int xx = 0; xx < wd; ++xx) {
              const S v = srow[xx];
              d0[2 * xx] += kw[0] * v;
              d0[2 * xx + 1] += kw[1] * v;
              d1[2 * xx] += kw[2] * v;
              d1[2 * xx + 1] += kw[3] * v;
            }
          }
        }
      }
    }
  }

  if (tape) {
    TensorT<S> xx = x;
    tape->record("deconv2d", out, [xx, w, out, out_channels, groups]() mutable {
      const int n = xx.shape().n, c = xx.shape().c;
      const int h = xx.shape().h, wd = xx.shape().w;
      const int cpg = c / groups, fpg = out_channels / groups;
      const int oh = 2 * h, ow = 2 * wd;
      const S* gout = out.grad();
      S* gx = xx.grad();
      S* gw = w.grad();
      for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
          for (int ic = 0; ic < cpg; ++ic) {
            const int cin = g * cpg + ic;
            const S* src = xx.data() + ((size_t(i) * c + cin) * h) * wd;
            S* gsrc = gx + ((size_t(i) * c + cin) * h) * wd;
            for (int oc = 0; oc < fpg; ++oc) {
              const int cout = g * fpg + oc;
              const S* kw = w.data() + ((size_t(cin) * fpg + oc) * 2) * 2;
              S* gkw = gw + ((size_t(cin) * fpg + oc) * 2) * 2;
              const S* gdst =
                  gout + ((size_t(i) * out_channels + cout) * oh) * ow;
              for (int y = 0; y < h; ++y) {
                const S* srow = src + size_t(y) * wd;
                S* grow = gsrc + size_t(y) * wd;
                const S* g0 = gdst + size_t(2 * y) * ow;
                const S* g1 = g0 + ow;
                for (int xx2 = 0; xx2 < wd; ++xx2) {
                  const S a = g0[2 * xx2], b = g0[2 * xx2 + 1];
                  const S cc = g1[2 * xx2], d = g1[2 * xx2 + 1];
                  grow[xx2] += kw[0] * a + kw[1] * b + kw[2] * cc + kw[3] * d;
                  const S v = srow[xx2];
                  gkw[0] += v * a;
                  gkw[1] += v * b;
                  gkw[2] += v * cc;
                  gkw[3] += v * d;
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// Depthwise form: one 2x2 filter per channel.
template <typename S>
TensorT<S> deconv2d_depthwise(TapeT<S>* tape, const TensorT<S>& x,
                              TensorT<S> w) {
  const int c = x.shape().c;
  R2I_CHECK_ARG(w.count() == int64_t(c) * 2 * 2,
                "deconv2d_depthwise: weight count must equal channels*2*2");
  return deconv2d(tape, x, w, c, c);
}

// Batch normalization. Train mode normalizes by batch statistics and
// updates the running buffers in place; infer mode uses the running
// statistics as constants.
template <typename S>
TensorT<S> batch_norm(TapeT<S>* tape, const TensorT<S>& x, TensorT<S> gamma,
                      TensorT<S> beta, TensorT<S> run_mean, TensorT<S> run_var,
                      BnMode mode, double momentum = 0.1, double eps = 1e-5) {
  const int n = x.shape().n, c = x.shape().c, h = x.shape().h,
            wd = x.shape().w;
  R2I_CHECK_ARG(gamma.count() == c && beta.count() == c,
                "batch_norm: gamma/beta must have one value per channel");
  R2I_CHECK_ARG(!run_mean.empty() && !run_var.empty() &&
                    run_mean.count() == c && run_var.count() == c,
                "batch_norm: running statistics missing or mis-sized");

  const size_t plane = size_t(h) * wd;
  const size_t per_channel = size_t(n) * plane;
  std::vector<S> mean(c), inv_std(c);

  if (mode == BnMode::kTrain) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (int i = 0; i < n; ++i) {
        const S* src = x.data() + ((size_t(i) * c + ch) * plane);
        for (size_t p = 0; p < plane; ++p) acc += src[p];
      }
      const double m = acc / double(per_channel);
      double var = 0;
      for (int i = 0; i < n; ++i) {
        const S* src = x.data() + ((size_t(i) * c + ch) * plane);
        for (size_t p = 0; p < plane; ++p) {
          const double d = double(src[p]) - m;
          var += d * d;
        }
      }
      var /= double(per_channel);
      mean[ch] = S(m);
      inv_std[ch] = S(1.0 / std::sqrt(var + eps));
      run_mean.data()[ch] =
          S((1.0 - momentum) * double(run_mean.data()[ch]) + momentum * m);
      run_var.data()[ch] =
          S((1.0 - momentum) * double(run_var.data()[ch]) + momentum * var);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      R2I_CHECK_ARG(std::isfinite(double(run_var.data()[ch])) &&
                        std::isfinite(double(run_mean.data()[ch])),
                    "batch_norm: running statistics not initialized");
      mean[ch] = run_mean.data()[ch];
      inv_std[ch] = S(1.0 / std::sqrt(double(run_var.data()[ch]) + eps));
    }
  }

  TensorT<S> out = TensorT<S>::zeros(x.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const S* src = x.data() + ((size_t(i) * c + ch) * plane);
      S* dst = out.data() + ((size_t(i) * c + ch) * plane);
      const S g = gamma.data()[ch], b = beta.data()[ch];
      const S mu = mean[ch], is = inv_std[ch];
      for (size_t p = 0; p < plane; ++p)
        dst[p] = g * ((src[p] - mu) * is) + b;
    }
  }

  if (tape) {
    TensorT<S> xx = x;
    const bool train = mode == BnMode::kTrain;
    tape->record("batch_norm", out,
                 [xx, gamma, beta, out, mean, inv_std, train]() mutable {
      const int n = xx.shape().n, c = xx.shape().c;
      const size_t plane = size_t(xx.shape().h) * xx.shape().w;
      const double m = double(n) * double(plane);
      const S* gout = out.grad();
      S* gx = xx.grad();
      S* gg = gamma.grad();
      S* gb = beta.grad();
      for (int ch = 0; ch < c; ++ch) {
        const S g = gamma.data()[ch];
        const S mu = mean[ch], is = inv_std[ch];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int i = 0; i < n; ++i) {
          const size_t off = (size_t(i) * c + ch) * plane;
          const S* src = xx.data() + off;
          const S* gy = gout + off;
          for (size_t p = 0; p < plane; ++p) {
            const double xhat = (double(src[p]) - mu) * is;
            sum_dy += gy[p];
            sum_dy_xhat += double(gy[p]) * xhat;
          }
        }
        gb[ch] += S(sum_dy);
        gg[ch] += S(sum_dy_xhat);
        for (int i = 0; i < n; ++i) {
          const size_t off = (size_t(i) * c + ch) * plane;
          const S* src = xx.data() + off;
          const S* gy = gout + off;
          S* gdst = gx + off;
          if (train) {
            for (size_t p = 0; p < plane; ++p) {
              const double xhat = (double(src[p]) - mu) * is;
              gdst[p] += S(double(g) * is *
                           (double(gy[p]) - sum_dy / m - xhat * sum_dy_xhat / m));
            }
          } else {
            for (size_t p = 0; p < plane; ++p)
              gdst[p] += S(double(g) * is * double(gy[p]));
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> relu(TapeT<S>* tape, const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const int64_t cnt = x.count();
  for (int64_t i = 0; i < cnt; ++i)
    out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
  if (tape) {
    TensorT<S> xx = x;
    tape->record("relu", out, [xx, out]() mutable {
      const S* gy = out.grad();
      S* gx = xx.grad();
      const int64_t cnt = xx.count();
      for (int64_t i = 0; i < cnt; ++i)
        if (xx.data()[i] > S(0)) gx[i] += gy[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> tanh_op(TapeT<S>* tape, const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const int64_t cnt = x.count();
  for (int64_t i = 0; i < cnt; ++i) out.data()[i] = S(std::tanh(double(x.data()[i])));
  if (tape) {
    TensorT<S> xx = x;
    tape->record("tanh", out, [xx, out]() mutable {
      const S* gy = out.grad();
      const S* y = out.data();
      S* gx = xx.grad();
      const int64_t cnt = xx.count();
      for (int64_t i = 0; i < cnt; ++i) gx[i] += gy[i] * (S(1) - y[i] * y[i]);
    });
  }
  return out;
}

// Maps [-1,1] activations to {-1,+1} codes. Stochastic mode samples +1 with
// probability (1+x)/2 so the expectation equals x; deterministic mode takes
// the sign (ties to +1). The backward pass is the identity in both modes.
template <typename S>
TensorT<S> binarize(TapeT<S>* tape, const TensorT<S>& x, BinarizerMode mode,
                    Rng* rng = nullptr) {
  const int64_t cnt = x.count();
  for (int64_t i = 0; i < cnt; ++i) {
    R2I_CHECK_ARG(std::abs(double(x.data()[i])) <= 1.0 + 1e-6,
                  "binarize: input outside [-1,1]");
  }
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  if (mode == BinarizerMode::kStochastic) {
    R2I_CHECK_ARG(rng != nullptr, "binarize: stochastic mode needs an rng");
    for (int64_t i = 0; i < cnt; ++i) {
      const double p_plus = (1.0 + double(x.data()[i])) * 0.5;
      out.data()[i] = rng->next_double() < p_plus ? S(1) : S(-1);
    }
  } else {
    for (int64_t i = 0; i < cnt; ++i)
      out.data()[i] = x.data()[i] >= S(0) ? S(1) : S(-1);
  }
  if (tape) {
    TensorT<S> xx = x;
    tape->record("binarize", out, [xx, out]() mutable {
      const S* gy = out.grad();
      S* gx = xx.grad();
      const int64_t cnt = xx.count();
      for (int64_t i = 0; i < cnt; ++i) gx[i] += gy[i];
    }, /*stochastic=*/mode == BinarizerMode::kStochastic);
  }
  return out;
}

template <typename S>
TensorT<S> add(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
  R2I_CHECK_ARG(a.shape() == b.shape(), "add: shape mismatch " +
                                            a.shape().str() + " vs " +
                                            b.shape().str());
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const int64_t cnt = a.count();
  for (int64_t i = 0; i < cnt; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tape) {
    TensorT<S> aa = a, bb = b;
    tape->record("add", out, [aa, bb, out]() mutable {
      const S* gy = out.grad();
      S* ga = aa.grad();
      S* gb = bb.grad();
      const int64_t cnt = aa.count();
      for (int64_t i = 0; i < cnt; ++i) {
        ga[i] += gy[i];
        gb[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> sub(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
  R2I_CHECK_ARG(a.shape() == b.shape(), "sub: shape mismatch " +
                                            a.shape().str() + " vs " +
                                            b.shape().str());
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const int64_t cnt = a.count();
  for (int64_t i = 0; i < cnt; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (tape) {
    TensorT<S> aa = a, bb = b;
    tape->record("sub", out, [aa, bb, out]() mutable {
      const S* gy = out.grad();
      S* ga = aa.grad();
      S* gb = bb.grad();
      const int64_t cnt = aa.count();
      for (int64_t i = 0; i < cnt; ++i) {
        ga[i] += gy[i];
        gb[i] -= gy[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> concat_channels(TapeT<S>* tape, const std::vector<TensorT<S>>& xs) {
  R2I_CHECK_ARG(!xs.empty(), "concat: no inputs");
  int total_c = 0;
  for (const auto& x : xs) {
    R2I_CHECK_ARG(x.shape().n == xs[0].shape().n &&
                      x.shape().h == xs[0].shape().h &&
                      x.shape().w == xs[0].shape().w,
                  "concat: inputs must agree outside the channel axis");
    total_c += x.shape().c;
  }
  const int n = xs[0].shape().n, h = xs[0].shape().h, w = xs[0].shape().w;
  TensorT<S> out = TensorT<S>::zeros(Shape(n, total_c, h, w));
  const size_t plane = size_t(h) * w;
  for (int i = 0; i < n; ++i) {
    size_t coff = 0;
    for (const auto& x : xs) {
      const size_t block = size_t(x.shape().c) * plane;
      std::memcpy(out.data() + (size_t(i) * total_c) * plane + coff * plane,
                  x.data() + size_t(i) * block, block * sizeof(S));
      coff += x.shape().c;
    }
  }
  if (tape) {
    std::vector<TensorT<S>> ins = xs;
    tape->record("concat", out, [ins, out, total_c]() mutable {
      const int n = ins[0].shape().n;
      const size_t plane = size_t(ins[0].shape().h) * ins[0].shape().w;
      const S* gy = out.grad();
      for (int i = 0; i < n; ++i) {
        size_t coff = 0;
        for (auto& x : ins) {
          const size_t block = size_t(x.shape().c) * plane;
          S* gx = x.grad() + size_t(i) * block;
          const S* src = gy + (size_t(i) * total_c + coff) * plane;
          for (size_t p = 0; p < block; ++p) gx[p] += src[p];
          coff += x.shape().c;
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> crop(TapeT<S>* tape, const TensorT<S>& x, int top, int left,
                int out_h, int out_w) {
  R2I_CHECK_ARG(top >= 0 && left >= 0 && top + out_h <= x.shape().h &&
                    left + out_w <= x.shape().w,
                "crop: region out of bounds");
  const int n = x.shape().n, c = x.shape().c;
  TensorT<S> out = TensorT<S>::zeros(Shape(n, c, out_h, out_w));
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < out_h; ++y) {
        const S* src = x.data() + (((size_t(i) * c + ch) * x.shape().h +
                                    top + y) *
                                   x.shape().w) +
                       left;
        std::memcpy(&out.at(i, ch, y, 0), src, sizeof(S) * out_w);
      }
  if (tape) {
    TensorT<S> xx = x;
    tape->record("crop", out, [xx, out, top, left]() mutable {
      const int n = out.shape().n, c = out.shape().c;
      const int oh = out.shape().h, ow = out.shape().w;
      const S* gy = out.grad();
      S* gx = xx.grad();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < oh; ++y) {
            S* dst = gx + (((size_t(i) * xx.shape().c + ch) * xx.shape().h +
                            top + y) *
                           xx.shape().w) +
                     left;
            const S* src = gy + ((size_t(i) * c + ch) * oh + y) * ow;
            for (int x2 = 0; x2 < ow; ++x2) dst[x2] += src[x2];
          }
    });
  }
  return out;
}

template <typename S>
TensorT<S> scale(TapeT<S>* tape, const TensorT<S>& x, S k) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const int64_t cnt = x.count();
  for (int64_t i = 0; i < cnt; ++i) out.data()[i] = x.data()[i] * k;
  if (tape) {
    TensorT<S> xx = x;
    tape->record("scale", out, [xx, out, k]() mutable {
      const S* gy = out.grad();
      S* gx = xx.grad();
      const int64_t cnt = xx.count();
      for (int64_t i = 0; i < cnt; ++i) gx[i] += k * gy[i];
    });
  }
  return out;
}

// Sum of squares reduced to a scalar (1,1,1,1) tensor.
template <typename S>
TensorT<S> sum_sq(TapeT<S>* tape, const TensorT<S>& x) {
  double acc = 0;
  const int64_t cnt = x.count();
  for (int64_t i = 0; i < cnt; ++i)
    acc += double(x.data()[i]) * double(x.data()[i]);
  TensorT<S> out = TensorT<S>::from_values(Shape(1, 1, 1, 1), {S(acc)});
  if (tape) {
    TensorT<S> xx = x;
    tape->record("sum_sq", out, [xx, out]() mutable {
      const S g = out.grad()[0];
      S* gx = xx.grad();
      const int64_t cnt = xx.count();
      for (int64_t i = 0; i < cnt; ++i) gx[i] += S(2) * xx.data()[i] * g;
    });
  }
  return out;
}

// One multi-scale block branch: conv(pad = dilation) + BN + ReLU.
template <typename S>
struct MsBranch {
  int dilation = 1;
  TensorT<S> w, b, gamma, beta, run_mean, run_var;
};

// Parallel dilated 3x3 branches concatenated along channels. Padding equals
// each branch's dilation so all branches share the input's spatial dims.
template <typename S>
TensorT<S> multiscale_layer(TapeT<S>* tape, const TensorT<S>& x,
                            std::vector<MsBranch<S>>& branches, BnMode mode,
                            double momentum = 0.1, double eps = 1e-5) {
  R2I_CHECK_ARG(!branches.empty(), "multiscale_layer: no branches");
  std::vector<TensorT<S>> outs;
  outs.reserve(branches.size());
  for (auto& br : branches) {
    ConvSpec sp;
    sp.in_channels = x.shape().c;
    sp.out_channels = br.w.shape().n;
    sp.kernel = 3;
    sp.stride = 1;
    sp.dilation = br.dilation;
    sp.pad = br.dilation;
    sp.has_bias = true;
    TensorT<S> y = conv2d(tape, x, sp, br.w, br.b);
    y = batch_norm(tape, y, br.gamma, br.beta, br.run_mean, br.run_var, mode,
                   momentum, eps);
    outs.push_back(relu(tape, y));
  }
  return concat_channels(tape, outs);
}

}  // namespace r2i

#endif  // R2I_OPS_HPP_
