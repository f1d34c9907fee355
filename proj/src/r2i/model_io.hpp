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

#ifndef R2I_MODEL_IO_HPP_
#define R2I_MODEL_IO_HPP_

#include <array>
#include <memory>
#include <string>

#include "r2i/codec.hpp"
#include "r2i/inpaint.hpp"
#include "r2i/model.hpp"
#include "r2i/weights.hpp"

namespace r2i {

// A weight file rehydrated into runnable objects. Compression kinds fill
// `model`; inpaint/vanilla fill `net`; the coupled kind fills both.
struct LoadedModel {
  WeightFile file;
  std::unique_ptr<Model> model;
  std::unique_ptr<InpaintNet> net;
  std::array<uint8_t, 8> digest{};
};

inline ModelKind model_kind_of(WeightKind k) {
  switch (k) {
    case WeightKind::kResidual: return ModelKind::kResidual;
    case WeightKind::kPrediction: return ModelKind::kPrediction;
    case WeightKind::kFull: return ModelKind::kFull;
    case WeightKind::kDecoding:
    case WeightKind::kIr2i: return ModelKind::kDecoding;
    default:
      throw ArgError("weight kind has no compression model");
  }
}

inline void copy_params(const ParamSet& src, ParamSet& dst) {
  for (const auto& name : dst.names()) {
    R2I_CHECK_ARG(src.contains(name), "weight file missing tensor: " + name);
    const Tensor& from = src.at(name);
    Tensor& to = dst.at(name);
    R2I_CHECK_ARG(from.shape() == to.shape(),
                  "weight tensor shape mismatch for " + name);
    std::memcpy(to.data(), from.data(), size_t(to.count()) * sizeof(float));
  }
}

inline LoadedModel load_model(const std::string& path) {
  LoadedModel lm;
  lm.file = load_weights(path);
  lm.digest = weight_digest(path);
  size_t expected = 0;
  switch (lm.file.kind) {
    case WeightKind::kResidual:
    case WeightKind::kPrediction:
    case WeightKind::kFull:
    case WeightKind::kDecoding: {
      lm.model = std::make_unique<Model>(Model::build(
          model_kind_of(lm.file.kind), lm.file.stages, lm.file.seed));
      copy_params(lm.file.params, lm.model->params());
      expected = lm.model->params().size();
      break;
    }
    case WeightKind::kIr2i: {
      lm.model = std::make_unique<Model>(
          Model::build(ModelKind::kDecoding, lm.file.stages, lm.file.seed,
                       /*joint_head=*/true));
      lm.net = std::make_unique<InpaintNet>(InpaintNet::build_multiscale(
          Rng(lm.file.seed).stream("inpaint-init").next_u64()));
      copy_params(lm.file.params, lm.model->params());
      copy_params(lm.file.params, lm.net->params());
      expected = lm.model->params().size() + lm.net->params().size();
      break;
    }
    case WeightKind::kInpaint: {
      lm.net = std::make_unique<InpaintNet>(
          InpaintNet::build_multiscale(lm.file.seed));
      copy_params(lm.file.params, lm.net->params());
      expected = lm.net->params().size();
      break;
    }
    case WeightKind::kVanilla: {
      lm.net = std::make_unique<InpaintNet>(
          InpaintNet::build_vanilla(lm.file.seed));
      copy_params(lm.file.params, lm.net->params());
      expected = lm.net->params().size();
      break;
    }
  }
  if (lm.file.params.size() != expected)
    throw CorruptError("weight file has unexpected extra tensors");
  return lm;
}

}  // namespace r2i

#endif  // R2I_MODEL_IO_HPP_
