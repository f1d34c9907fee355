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

#ifndef R2I_INPAINT_HPP_
#define R2I_INPAINT_HPP_

#include <string>
#include <vector>

#include "r2i/ops.hpp"
#include "r2i/params.hpp"

namespace r2i {

inline constexpr int kContextSize = 64;
inline constexpr int kPatchSize = 32;

// Partial-context inpainting network. The input is a 64x64 context whose
// bottom-right 32x32 quadrant (the patch to predict) is zeroed; the output
// is a 32x32 estimate of that quadrant.
//
// The multi-scale variant stacks 8 blocks of parallel dilated 3x3
// convolutions (24 filters each at dilations 1,2,4,8, concatenated); the
// vanilla baseline is a 32-layer plain conv stack at dilation 1 with its
// width chosen to match the multi-scale parameter count. Both end with a
// linear 3-channel prediction convolution, a crop to the bottom-right
// quadrant, and TanH. The pre-TanH crop is what couples into the
// compression stages under joint training.
template <typename S>
class InpaintNetT {
 public:
  struct Out {
    TensorT<S> pred_pre;  // (N,3,32,32), before TanH
    TensorT<S> pred;      // (N,3,32,32), in [-1,1]
  };

  static InpaintNetT build_multiscale(uint64_t seed) {
    InpaintNetT net;
    net.prefix_ = "inp";
    net.blocks_.assign(8, Block{{1, 2, 4, 8}, 24});
    net.seed_ = seed;
    net.init_params(seed);
    return net;
  }

  // Width 46 puts the plain stack within 2% of the multi-scale count.
  static InpaintNetT build_vanilla(uint64_t seed) {
    InpaintNetT net;
    net.prefix_ = "van";
    net.blocks_.assign(32, Block{{1}, 46});
    net.seed_ = seed;
    net.init_params(seed);
    return net;
  }

  const std::string& prefix() const { return prefix_; }
  uint64_t seed() const { return seed_; }
  ParamSetT<S>& params() { return params_; }
  const ParamSetT<S>& params() const { return params_; }
  int64_t count_params() const { return params_.trainable_count(); }
  size_t block_count() const { return blocks_.size(); }

  Out forward(TapeT<S>* tape, const TensorT<S>& context, BnMode bn_mode) {
    R2I_CHECK_ARG(context.shape().c == 3 &&
                      context.shape().h == kContextSize &&
                      context.shape().w == kContextSize,
                  "inpaint: context must be (N,3,64,64)");
    check_masked(context);
    TensorT<S> x = context;
    for (size_t b = 0; b < blocks_.size(); ++b) {
      std::vector<MsBranch<S>> branches;
      for (int d : blocks_[b].dilations) {
        const std::string base = branch_name(b, d);
        branches.push_back(MsBranch<S>{d, params_.at(base + "/weight"),
                                       params_.at(base + "/bias"),
                                       params_.at(base + "/bn_gamma"),
                                       params_.at(base + "/bn_beta"),
                                       params_.at(base + "/bn_mean"),
                                       params_.at(base + "/bn_var")});
      }
      x = multiscale_layer(tape, x, branches, bn_mode);
    }
    ConvSpec spec;
    spec.in_channels = x.shape().c;
    spec.out_channels = 3;
    spec.kernel = 3;
    spec.stride = 1;
    spec.pad = 1;
    spec.has_bias = true;
    TensorT<S> rgb = conv2d(tape, x, spec, params_.at(prefix_ + "/rgb/weight"),
                            params_.at(prefix_ + "/rgb/bias"));
    Out out;
    out.pred_pre = crop(tape, rgb, kContextSize - kPatchSize,
                        kContextSize - kPatchSize, kPatchSize, kPatchSize);
    out.pred = tanh_op(tape, out.pred_pre);
    return out;
  }

 private:
  struct Block {
    std::vector<int> dilations;
    int filters;
  };

  std::string branch_name(size_t block, int dilation) const {
    return prefix_ + "/ms" + std::to_string(block + 1) + "/d" +
           std::to_string(dilation);
  }

  void check_masked(const TensorT<S>& context) const {
    const int off = kContextSize - kPatchSize;
    for (int n = 0; n < context.shape().n; ++n)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kPatchSize; ++y)
          for (int x = 0; x < kPatchSize; ++x)
            R2I_CHECK_ARG(context.at(n, c, off + y, off + x) == S(0),
                          "inpaint: bottom-right 32x32 must be zeroed");
  }

  void init_params(uint64_t seed) {
    Rng init = Rng(seed).stream("init");
    int in_c = 3;
    for (size_t b = 0; b < blocks_.size(); ++b) {
      for (int d : blocks_[b].dilations) {
        const std::string base = branch_name(b, d);
        const int f = blocks_[b].filters;
        params_.create(base + "/weight",
                       msra_init<S>(Shape(f, in_c, 3, 3), int64_t(in_c) * 9,
                                    init.stream(base + "/weight")));
        params_.create(base + "/bias", TensorT<S>::zeros(Shape(f, 1, 1, 1)));
        params_.create(base + "/bn_gamma",
                       TensorT<S>::full(Shape(f, 1, 1, 1), S(1)));
        params_.create(base + "/bn_beta", TensorT<S>::zeros(Shape(f, 1, 1, 1)));
        params_.create(base + "/bn_mean", TensorT<S>::zeros(Shape(f, 1, 1, 1)));
        params_.create(base + "/bn_var",
                       TensorT<S>::full(Shape(f, 1, 1, 1), S(1)));
      }
      in_c = blocks_[b].filters * int(blocks_[b].dilations.size());
    }
    params_.create(prefix_ + "/rgb/weight",
                   msra_init<S>(Shape(3, in_c, 3, 3), int64_t(in_c) * 9,
                                init.stream(prefix_ + "/rgb/weight")));
    params_.create(prefix_ + "/rgb/bias", TensorT<S>::zeros(Shape(3, 1, 1, 1)));
  }

  std::string prefix_;
  std::vector<Block> blocks_;
  uint64_t seed_ = 0;
  ParamSetT<S> params_;
};

using InpaintNet = InpaintNetT<float>;

}  // namespace r2i

#endif  // R2I_INPAINT_HPP_
