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

#ifndef R2I_MODEL_HPP_
#define R2I_MODEL_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "r2i/ops.hpp"
#include "r2i/params.hpp"

namespace r2i {

// Connection taxonomy between successive stages:
//   kResidual   - no connections; each stage models the previous residual.
//   kPrediction - parameter-free running sum of per-stage predictions.
//   kFull       - learned 3x3 links on encoder and decoder layers.
//   kDecoding   - learned 3x3 links on decoder layers only.
enum class ModelKind { kResidual, kPrediction, kFull, kDecoding };

inline const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kResidual: return "residual";
    case ModelKind::kPrediction: return "prediction";
    case ModelKind::kFull: return "full";
    case ModelKind::kDecoding: return "decoding";
  }
  return "?";
}

// Forward-pass configuration. Training uses batch statistics and the
// stochastic binarizer; encoding/decoding must be deterministic.
struct RunOptions {
  BnMode bn_mode = BnMode::kInfer;
  BinarizerMode bin_mode = BinarizerMode::kDeterministic;
  Rng* bin_rng = nullptr;

  static RunOptions train(Rng* rng) {
    return RunOptions{BnMode::kTrain, BinarizerMode::kStochastic, rng};
  }
  static RunOptions infer() { return RunOptions{}; }
};

// Activations a stage exposes to its successor.
template <typename S>
using CarryT = std::map<std::string, TensorT<S>>;

template <typename S>
struct StageResultT {
  TensorT<S> estimate;  // image estimate; residual estimate for kResidual
  TensorT<S> pred_pre;  // pre-nonlinearity prediction (kPrediction / joint)
  TensorT<S> code;      // {-1,+1} values, (N, 8, H/8, W/8)
  CarryT<S> carry;
};

namespace arch {

// One trunk row. Channel counts follow the row order; the binarizer sits
// between "code" and "dec1".
struct TrunkRow {
  const char* name;
  bool deconv;
  int filters;
  int kernel;  // conv rows only
  int stride;
  bool bn;
  NonLin act;
  const char* input;         // producing row, or "input"/"bits"
  bool input_combined;       // consume the link-combined value when present
};

inline const std::vector<TrunkRow>& encoder_rows() {
  static const std::vector<TrunkRow> rows = {
      {"enc1", false, 64, 3, 1, true, NonLin::kRelu, "input", false},
      {"enc2", false, 128, 3, 2, true, NonLin::kRelu, "enc1", true},
      {"enc3", false, 128, 3, 1, true, NonLin::kRelu, "enc2", true},
      {"enc4", false, 256, 3, 2, true, NonLin::kRelu, "enc3", true},
      {"enc5", false, 256, 3, 1, true, NonLin::kRelu, "enc4", true},
      {"enc6", false, 256, 3, 2, true, NonLin::kRelu, "enc5", true},
      {"code", false, 8, 1, 1, false, NonLin::kTanh, "enc6", true},
  };
  return rows;
}

inline const std::vector<TrunkRow>& decoder_rows() {
  static const std::vector<TrunkRow> rows = {
      {"dec1", false, 256, 3, 1, false, NonLin::kNone, "bits", false},
      {"dec2", false, 256, 3, 1, true, NonLin::kRelu, "dec1", false},
      {"up1", true, 256, 2, 2, false, NonLin::kNone, "dec2", true},
      {"dec3", false, 128, 3, 1, true, NonLin::kRelu, "up1", true},
      {"up2", true, 128, 2, 2, false, NonLin::kNone, "dec3", true},
      {"dec4", false, 64, 3, 1, true, NonLin::kRelu, "up2", true},
      {"up3", true, 64, 2, 2, false, NonLin::kNone, "dec4", true},
      {"pred", false, 3, 3, 1, false, NonLin::kTanh, "up3", true},
  };
  return rows;
}

inline std::vector<std::string> linked_rows(ModelKind kind) {
  switch (kind) {
    case ModelKind::kFull:
      return {"enc1", "enc2", "enc3", "enc4", "enc5", "enc6",
              "dec2", "up1",  "dec3", "up2",  "dec4", "up3"};
    case ModelKind::kDecoding:
      return {"up1", "up2", "up3"};
    default:
      return {};
  }
}

inline bool is_linked(ModelKind kind, const std::string& row) {
  for (const auto& r : linked_rows(kind))
    if (r == row) return true;
  return false;
}

// Input channel count of each row, derived from the producing row.
inline int row_in_channels(const std::vector<TrunkRow>& rows, size_t idx,
                           int image_channels, int code_channels) {
  const TrunkRow& row = rows[idx];
  if (std::string(row.input) == "input") return image_channels;
  if (std::string(row.input) == "bits") return code_channels;
  for (size_t j = 0; j < rows.size(); ++j)
    if (std::string(rows[j].name) == row.input) return rows[j].filters;
  // producing row sits in the other half of the trunk (decoder reads enc).
  return -1;
}

}  // namespace arch

// Multi-stage progressive coder. Each stage maps a residual image to a
// 0.125 bpp binary code and a reconstruction estimate; stages communicate
// through the connection scheme selected by ModelKind.
//
// With joint_head set (used when coupling to the inpainting network), the
// final prediction convolution is kept pre-nonlinearity and the caller's
// inpainting estimate is added before the output TanH.
template <typename S>
class ModelT {
 public:
  static ModelT build(ModelKind kind, int stages, uint64_t seed,
                      bool joint_head = false) {
    R2I_CHECK_ARG(stages >= 1, "model: stage count must be >= 1");
    R2I_CHECK_ARG(!joint_head || kind == ModelKind::kDecoding,
                  "model: joint head requires decoding connections");
    ModelT m;
    m.kind_ = kind;
    m.stages_ = stages;
    m.seed_ = seed;
    m.joint_head_ = joint_head;
    m.init_params(seed);
    return m;
  }

  ModelKind kind() const { return kind_; }
  int stages() const { return stages_; }
  uint64_t seed() const { return seed_; }
  bool joint_head() const { return joint_head_; }
  void set_joint_head(bool v) {
    R2I_CHECK_ARG(!v || kind_ == ModelKind::kDecoding,
                  "model: joint head requires decoding connections");
    joint_head_ = v;
  }

  ParamSetT<S>& params() { return params_; }
  const ParamSetT<S>& params() const { return params_; }

  // Trainable scalars; batch-norm running statistics excluded.
  int64_t count_params() const { return params_.trainable_count(); }

  // Full per-stage pass: encoder, binarizer, decoder.
  // residual_in is R_{s-1} (R_0 = P, or P minus the inpainting estimate in
  // the joint configuration). carry holds the previous stage's activations;
  // it must be empty for s == 1.
  StageResultT<S> stage_forward(TapeT<S>* tape, int s,
                                const TensorT<S>& residual_in,
                                const CarryT<S>& carry, const RunOptions& run,
                                const TensorT<S>* inpaint_pre = nullptr) {
    check_stage_args(s, carry);
    R2I_CHECK_ARG(residual_in.shape().c == 3 && residual_in.shape().h % 8 == 0 &&
                      residual_in.shape().w % 8 == 0 && residual_in.shape().h >= 8,
                  "stage_forward: input must be (N,3,8k,8k)");
    Env env;
    env["input"] = residual_in;
    run_rows(tape, arch::encoder_rows(), s, env, carry, run);
    TensorT<S> code = binarize(tape, env.at("code"), run.bin_mode, run.bin_rng);
    env["bits"] = code;
    run_rows(tape, arch::decoder_rows(), s, env, carry, run);
    return finish_stage(tape, s, env, carry, code, inpaint_pre);
  }

  // Decoder-only pass from a received code. carry needs decoder-side
  // activations only (all connection schemes link decoder rows to decoder
  // rows, so a bitstream is decodable without encoder state).
  StageResultT<S> stage_decode(int s, const TensorT<S>& code,
                               const CarryT<S>& carry,
                               const TensorT<S>* inpaint_pre = nullptr) {
    R2I_CHECK_ARG(s >= 1 && s <= stages_, "stage_decode: stage out of range");
    R2I_CHECK_ARG(code.shape().c == 8, "stage_decode: code must have 8 channels");
    Env env;
    env["bits"] = code;
    RunOptions run = RunOptions::infer();
    run_rows(nullptr, arch::decoder_rows(), s, env, carry, run);
    return finish_stage(nullptr, s, env, carry, code, inpaint_pre);
  }

  // Activation names the next stage will read from the carry.
  std::vector<std::string> carry_names() const {
    std::vector<std::string> names = arch::linked_rows(kind_);
    if (kind_ == ModelKind::kPrediction) names.push_back("pred_sum");
    return names;
  }

 private:
  using Env = std::map<std::string, TensorT<S>>;

  void check_stage_args(int s, const CarryT<S>& carry) const {
    R2I_CHECK_ARG(s >= 1 && s <= stages_, "stage out of range");
    if (s == 1) {
      R2I_CHECK_ARG(carry.empty(), "stage 1 takes no carry");
    } else {
      for (const auto& name : carry_names())
        R2I_CHECK_ARG(carry.count(name) == 1,
                      "carry missing activation: " + name);
    }
  }

  static const TensorT<S>& carry_at(const CarryT<S>& carry,
                                    const std::string& name) {
    auto it = carry.find(name);
    R2I_CHECK_ARG(it != carry.end(), "carry missing activation: " + name);
    return it->second;
  }

  void create_conv(const std::string& base, int out_c, int in_c, int k,
                   bool bn, Rng init) {
    params_.create(base + "/weight",
                   msra_init<S>(Shape(out_c, in_c, k, k), int64_t(in_c) * k * k,
                                init.stream(base + "/weight")));
    params_.create(base + "/bias", TensorT<S>::zeros(Shape(out_c, 1, 1, 1)));
    if (bn) {
      params_.create(base + "/bn_gamma",
                     TensorT<S>::full(Shape(out_c, 1, 1, 1), S(1)));
      params_.create(base + "/bn_beta",
                     TensorT<S>::zeros(Shape(out_c, 1, 1, 1)));
      params_.create(base + "/bn_mean",
                     TensorT<S>::zeros(Shape(out_c, 1, 1, 1)));
      params_.create(base + "/bn_var",
                     TensorT<S>::full(Shape(out_c, 1, 1, 1), S(1)));
    }
  }

  void init_params(uint64_t seed) {
    Rng init = Rng(seed).stream("init");
    for (int s = 1; s <= stages_; ++s) {
      const std::string sp = "s" + std::to_string(s);
      auto emit_rows = [&](const std::vector<arch::TrunkRow>& rows,
                           int first_in) {
        for (size_t i = 0; i < rows.size(); ++i) {
          const auto& row = rows[i];
          const int in_c =
              arch::row_in_channels(rows, i, first_in, /*code_channels=*/8);
          const std::string base = sp + "/" + row.name;
          if (row.deconv) {
            // Ungrouped 2x2 stride-2 transposed convolution.
            params_.create(
                base + "/weight",
                msra_init<S>(Shape(in_c, row.filters, 2, 2), int64_t(in_c) * 4,
                             init.stream(base + "/weight")));
          } else {
            create_conv(base, row.filters, in_c, row.kernel, row.bn, init);
          }
        }
      };
      emit_rows(arch::encoder_rows(), 3);
      emit_rows(arch::decoder_rows(), 3);
      if (s >= 2) {
        for (const auto& row : arch::linked_rows(kind_)) {
          const int ch = row_filters(row);
          create_conv(sp + "/" + row + "_link", ch, ch, 3, /*bn=*/true, init);
        }
      }
    }
  }

  static int row_filters(const std::string& name) {
    for (const auto& r : arch::encoder_rows())
      if (name == r.name) return r.filters;
    for (const auto& r : arch::decoder_rows())
      if (name == r.name) return r.filters;
    throw ArgError("unknown trunk row: " + name);
  }

  // Resolves a row input: the combined value when the producing row carries
  // an incoming connection, the plain value otherwise.
  const TensorT<S>& resolve(const Env& env, const arch::TrunkRow& row) const {
    std::string key = row.input;
    if (row.input_combined && arch::is_linked(kind_, row.input))
      key = std::string(row.input) + "#c";
    auto it = env.find(key);
    R2I_CHECK_ARG(it != env.end(), "missing activation: " + key);
    return it->second;
  }

  void run_rows(TapeT<S>* tape, const std::vector<arch::TrunkRow>& rows, int s,
                Env& env, const CarryT<S>& carry, const RunOptions& run) {
    const std::string sp = "s" + std::to_string(s);
    for (size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      const TensorT<S>& in = resolve(env, row);
      const std::string base = sp + "/" + row.name;
      TensorT<S> out;
      if (row.deconv) {
        out = deconv2d(tape, in, params_.at(base + "/weight"), row.filters,
                       /*groups=*/1);
      } else {
        ConvSpec spec;
        spec.in_channels = in.shape().c;
        spec.out_channels = row.filters;
        spec.kernel = row.kernel;
        spec.stride = row.stride;
        spec.dilation = 1;
        spec.pad = row.kernel == 3 ? 1 : 0;
        spec.has_bias = true;
        out = conv2d(tape, in, spec, params_.at(base + "/weight"),
                     params_.at(base + "/bias"));
        if (row.bn)
          out = batch_norm(tape, out, params_.at(base + "/bn_gamma"),
                           params_.at(base + "/bn_beta"),
                           params_.at(base + "/bn_mean"),
                           params_.at(base + "/bn_var"), run.bn_mode);
        if (row.act == NonLin::kRelu) out = relu(tape, out);
        if (row.act == NonLin::kTanh && !suppress_pred_tanh(row)) out = tanh_op(tape, out);
      }
      env[row.name] = out;

      if (arch::is_linked(kind_, row.name)) {
        if (s == 1) {
          // Zero incoming connection: combine reduces to TanH of the local
          // path (no link parameters exist in stage 1).
          env[std::string(row.name) + "#c"] = tanh_op(tape, out);
        } else {
          const std::string lb = sp + "/" + row.name + "_link";
          const TensorT<S>& src = carry_at(carry, row.name);
          ConvSpec spec;
          spec.in_channels = src.shape().c;
          spec.out_channels = row.filters;
          spec.kernel = 3;
          spec.stride = 1;
          spec.pad = 1;
          spec.has_bias = true;
          TensorT<S> link = conv2d(tape, src, spec, params_.at(lb + "/weight"),
                                   params_.at(lb + "/bias"));
          link = batch_norm(tape, link, params_.at(lb + "/bn_gamma"),
                            params_.at(lb + "/bn_beta"),
                            params_.at(lb + "/bn_mean"),
                            params_.at(lb + "/bn_var"), run.bn_mode);
          link = relu(tape, link);
          env[std::string(row.name) + "#c"] =
              tanh_op(tape, add(tape, out, link));
        }
      }
    }
  }

  // The prediction-connection and joint-head variants keep the final
  // convolution linear; the output TanH is applied after combination.
  bool suppress_pred_tanh(const arch::TrunkRow& row) const {
    if (std::string(row.name) != "pred") return false;
    return kind_ == ModelKind::kPrediction || joint_head_;
  }

  StageResultT<S> finish_stage(TapeT<S>* tape, int s, Env& env,
                               const CarryT<S>& carry, TensorT<S> code,
                               const TensorT<S>* inpaint_pre) {
    StageResultT<S> result;
    result.code = std::move(code);
    for (const auto& name : arch::linked_rows(kind_)) {
      auto it = env.find(name);
      if (it != env.end()) result.carry[name] = it->second;
    }
    if (kind_ == ModelKind::kPrediction) {
      result.pred_pre = env.at("pred");
      TensorT<S> sum = s == 1
                           ? result.pred_pre
                           : add(tape, result.pred_pre, carry_at(carry, "pred_sum"));
      result.carry["pred_sum"] = sum;
      result.estimate = tanh_op(tape, sum);
    } else if (joint_head_) {
      R2I_CHECK_ARG(inpaint_pre != nullptr,
                    "joint head needs the inpainting estimate");
      result.pred_pre = env.at("pred");
      result.estimate =
          tanh_op(tape, add(tape, result.pred_pre, *inpaint_pre));
    } else {
      R2I_CHECK_ARG(inpaint_pre == nullptr,
                    "inpainting estimate given to a non-joint model");
      result.estimate = env.at("pred");
    }
    return result;
  }

  ModelKind kind_ = ModelKind::kResidual;
  int stages_ = 0;
  uint64_t seed_ = 0;
  bool joint_head_ = false;
  ParamSetT<S> params_;
};

using Model = ModelT<float>;

}  // namespace r2i

#endif  // R2I_MODEL_HPP_
