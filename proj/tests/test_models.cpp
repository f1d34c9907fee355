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

#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "r2i/inpaint.hpp"
#include "r2i/model.hpp"
#include "r2i/model_io.hpp"
#include "r2i/weights.hpp"
#include "support/helpers.hpp"

using namespace r2i;

namespace {

Tensor rand_patch(int n, Rng rng) {
  return r2i::test::rand_uniform<float>(Shape(n, 3, 32, 32), rng);
}

int64_t count_link_convs(const Model& m, int stage) {
  int64_t links = 0;
  for (const auto& name : m.params().names()) {
    const std::string prefix = "s" + std::to_string(stage) + "/";
    if (name.rfind(prefix, 0) == 0 && name.find("_link/weight") != std::string::npos)
      ++links;
  }
  return links;
}

}  // namespace

TEST_CASE("parameter counts reproduce the published totals at S=8") {
  struct Row {
    ModelKind kind;
    double reference;
  };
  const Row rows[] = {
      {ModelKind::kResidual, 24.2e6},
      {ModelKind::kPrediction, 24.2e6},
      {ModelKind::kFull, 49.8e6},
      {ModelKind::kDecoding, 29.2e6},
  };
  for (const auto& row : rows) {
    Model m = Model::build(row.kind, 8, 1);
    const double count = double(m.count_params());
    CHECK_MESSAGE(std::abs(count - row.reference) / row.reference < 0.02,
                  kind_name(row.kind), ": ", count, " vs ", row.reference);
  }
}

TEST_CASE("prediction S=1 has the same parameter shapes as residual S=1") {
  Model a = Model::build(ModelKind::kResidual, 1, 3);
  Model b = Model::build(ModelKind::kPrediction, 1, 3);
  REQUIRE(a.params().names().size() == b.params().names().size());
  for (const auto& name : a.params().names()) {
    REQUIRE(b.params().contains(name));
    CHECK(a.params().at(name).shape() == b.params().at(name).shape());
  }
}

TEST_CASE("full S=2 carries 12 parametric connections in stage 2") {
  Model m = Model::build(ModelKind::kFull, 2, 5);
  CHECK(count_link_convs(m, 1) == 0);
  CHECK(count_link_convs(m, 2) == 12);
  Model d = Model::build(ModelKind::kDecoding, 2, 5);
  CHECK(count_link_convs(d, 2) == 3);
}

TEST_CASE("same seed rebuilds bit-identical parameters") {
  Model a = Model::build(ModelKind::kDecoding, 2, 77);
  Model b = Model::build(ModelKind::kDecoding, 2, 77);
  for (const auto& name : a.params().names()) {
    const Tensor& ta = a.params().at(name);
    const Tensor& tb = b.params().at(name);
    REQUIRE(ta.shape() == tb.shape());
    CHECK(std::memcmp(ta.data(), tb.data(), sizeof(float) * ta.count()) == 0);
  }
}

TEST_CASE("stage code is 128 bits per 32x32 patch") {
  for (ModelKind kind : {ModelKind::kResidual, ModelKind::kPrediction,
                         ModelKind::kFull, ModelKind::kDecoding}) {
    Model m = Model::build(kind, 2, 9);
    Tensor p = rand_patch(2, Rng(10));
    auto out = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
    CHECK(out.code.shape() == Shape(2, 8, 4, 4));
    for (int64_t i = 0; i < out.code.count(); ++i)
      CHECK((out.code.data()[i] == 1.f || out.code.data()[i] == -1.f));
  }
}

TEST_CASE("deterministic stage forward is reproducible") {
  Model m = Model::build(ModelKind::kDecoding, 2, 11);
  Tensor p = rand_patch(1, Rng(12));
  auto a = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
  auto b = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
  CHECK(std::memcmp(a.code.data(), b.code.data(),
                    sizeof(float) * a.code.count()) == 0);
  CHECK(std::memcmp(a.estimate.data(), b.estimate.data(),
                    sizeof(float) * a.estimate.count()) == 0);
}

TEST_CASE("residual-chain identity: estimate + residual telescopes") {
  Model m = Model::build(ModelKind::kResidual, 3, 13);
  Tensor p = rand_patch(1, Rng(14));
  Tensor residual = p;
  CarryT<float> carry;
  for (int s = 1; s <= 3; ++s) {
    auto out = m.stage_forward(nullptr, s, residual, carry, RunOptions::infer());
    // R_s = R_{s-1} - M_s(R_{s-1}), computed outside the graph.
    Tensor next = Tensor::zeros(residual.shape());
    for (int64_t i = 0; i < residual.count(); ++i)
      next.data()[i] = residual.data()[i] - out.estimate.data()[i];
    for (int64_t i = 0; i < residual.count(); ++i)
      CHECK(residual.data()[i] - out.estimate.data()[i] == next.data()[i]);
    residual = next;
    carry = std::move(out.carry);
  }
}

TEST_CASE("stage 1 rejects carries; later stages require them") {
  Model m = Model::build(ModelKind::kDecoding, 2, 15);
  Tensor p = rand_patch(1, Rng(16));
  auto s1 = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
  CarryT<float> bogus = s1.carry;
  CHECK_THROWS_AS(m.stage_forward(nullptr, 1, p, bogus, RunOptions::infer()),
                  ArgError);
  CHECK_THROWS_AS(m.stage_forward(nullptr, 2, p, {}, RunOptions::infer()),
                  ArgError);
  // Correct carry works.
  auto s2 = m.stage_forward(nullptr, 2, p, s1.carry, RunOptions::infer());
  CHECK(s2.estimate.shape() == p.shape());
}

TEST_CASE("zeroed connection parameters degenerate to the local path") {
  // With all-zero link convolutions (including their BN scale), stage 2
  // computes exactly what stage 1 semantics give on the same trunk weights.
  for (ModelKind kind : {ModelKind::kPrediction, ModelKind::kFull,
                         ModelKind::kDecoding}) {
    CAPTURE(kind_name(kind));
    Model m = Model::build(kind, 2, 17);
    // Copy stage-2 trunk weights over stage 1 so both stages share weights.
    for (const auto& name : m.params().names()) {
      if (name.rfind("s2/", 0) == 0 && name.find("_link/") == std::string::npos) {
        const std::string s1name = "s1/" + name.substr(3);
        Tensor& dst = m.params().at(s1name);
        const Tensor& src = m.params().at(name);
        std::memcpy(dst.data(), src.data(), sizeof(float) * src.count());
      }
      if (name.find("_link/") != std::string::npos) {
        Tensor& t = m.params().at(name);
        std::memset(t.data(), 0, sizeof(float) * t.count());
      }
    }
    Tensor p = rand_patch(1, Rng(18));
    auto s1 = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
    auto s2 = m.stage_forward(nullptr, 2, p, s1.carry, RunOptions::infer());
    if (kind == ModelKind::kPrediction) {
      // The running sum makes outputs differ; compare pre-sum predictions.
      for (int64_t i = 0; i < s1.pred_pre.count(); ++i)
        CHECK(s2.pred_pre.data()[i] ==
              doctest::Approx(s1.pred_pre.data()[i]).epsilon(1e-6));
    } else {
      for (int64_t i = 0; i < s1.estimate.count(); ++i)
        CHECK(s2.estimate.data()[i] ==
              doctest::Approx(s1.estimate.data()[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("prediction kind accumulates a running pre-activation sum") {
  Model m = Model::build(ModelKind::kPrediction, 2, 19);
  Tensor p = rand_patch(1, Rng(20));
  auto s1 = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
  // estimate_1 = tanh(pred_pre_1)
  for (int64_t i = 0; i < p.count(); ++i)
    CHECK(s1.estimate.data()[i] ==
          doctest::Approx(std::tanh(s1.pred_pre.data()[i])).epsilon(1e-6));
  Tensor r1 = Tensor::zeros(p.shape());
  for (int64_t i = 0; i < p.count(); ++i)
    r1.data()[i] = p.data()[i] - s1.estimate.data()[i];
  auto s2 = m.stage_forward(nullptr, 2, r1, s1.carry, RunOptions::infer());
  for (int64_t i = 0; i < p.count(); ++i) {
    const float sum = s1.pred_pre.data()[i] + s2.pred_pre.data()[i];
    CHECK(s2.estimate.data()[i] ==
          doctest::Approx(std::tanh(sum)).epsilon(1e-6));
  }
}

TEST_CASE("stage_decode matches the decoder half of stage_forward") {
  for (ModelKind kind : {ModelKind::kResidual, ModelKind::kPrediction,
                         ModelKind::kFull, ModelKind::kDecoding}) {
    CAPTURE(kind_name(kind));
    Model m = Model::build(kind, 2, 21);
    Tensor p = rand_patch(1, Rng(22));
    auto s1 = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
    auto d1 = m.stage_decode(1, s1.code, {});
    CHECK(std::memcmp(d1.estimate.data(), s1.estimate.data(),
                      sizeof(float) * p.count()) == 0);

    Tensor r1 = Tensor::zeros(p.shape());
    for (int64_t i = 0; i < p.count(); ++i)
      r1.data()[i] = (kind == ModelKind::kResidual)
                         ? p.data()[i] - s1.estimate.data()[i]
                         : p.data()[i] - s1.estimate.data()[i];
    auto s2 = m.stage_forward(nullptr, 2, r1, s1.carry, RunOptions::infer());
    auto d2 = m.stage_decode(2, s2.code, d1.carry);
    CHECK(std::memcmp(d2.estimate.data(), s2.estimate.data(),
                      sizeof(float) * p.count()) == 0);
  }
}

TEST_CASE("inpainting net: structure, range, parameter match") {
  InpaintNet net = InpaintNet::build_multiscale(31);
  CHECK(net.block_count() == 8);

  Tensor ctx = Tensor::zeros(Shape(1, 3, 64, 64));
  auto out = net.forward(nullptr, ctx, BnMode::kInfer);
  CHECK(out.pred.shape() == Shape(1, 3, 32, 32));
  for (int64_t i = 0; i < out.pred.count(); ++i) {
    CHECK(out.pred.data()[i] <= 1.f);
    CHECK(out.pred.data()[i] >= -1.f);
  }

  InpaintNet vanilla = InpaintNet::build_vanilla(32);
  CHECK(vanilla.block_count() == 32);
  const double inp = double(net.count_params());
  const double van = double(vanilla.count_params());
  CHECK_MESSAGE(std::abs(van - inp) / inp < 0.02, "inpaint ", inp, " vanilla ",
                van);
}

TEST_CASE("inpainting net validates the zeroed quadrant") {
  InpaintNet net = InpaintNet::build_multiscale(33);
  Tensor ctx = Tensor::full(Shape(1, 3, 64, 64), 0.25f);
  CHECK_THROWS_AS(net.forward(nullptr, ctx, BnMode::kInfer), ArgError);
}

TEST_CASE("inpainting context carries information to the prediction") {
  // Two contexts differing only in the visible quadrants must produce
  // different predictions (the receptive field spans the context).
  InpaintNet net = InpaintNet::build_multiscale(34);
  Tensor a = Tensor::zeros(Shape(1, 3, 64, 64));
  Tensor b = Tensor::zeros(Shape(1, 3, 64, 64));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) b.at(0, c, y, x) = 0.8f;
  auto pa = net.forward(nullptr, a, BnMode::kInfer);
  auto pb = net.forward(nullptr, b, BnMode::kInfer);
  double diff = 0;
  for (int64_t i = 0; i < pa.pred.count(); ++i)
    diff += std::abs(pa.pred.data()[i] - pb.pred.data()[i]);
  CHECK(diff > 1e-3);
}

TEST_CASE("weight files round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "r2i_w_test.r2iw").string();
  Model m = Model::build(ModelKind::kDecoding, 2, 55);
  WeightFile file;
  file.kind = WeightKind::kDecoding;
  file.stages = 2;
  file.seed = 55;
  for (const auto& name : m.params().names())
    file.params.create(name, m.params().at(name));
  save_weights(path, file);

  WeightFile loaded = load_weights(path);
  CHECK(loaded.kind == WeightKind::kDecoding);
  CHECK(loaded.stages == 2);
  CHECK(loaded.seed == 55);
  REQUIRE(loaded.params.size() == file.params.size());
  for (const auto& name : file.params.names()) {
    const Tensor& a = file.params.at(name);
    const Tensor& b = loaded.params.at(name);
    REQUIRE(a.shape() == b.shape());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.count()) == 0);
  }

  // Digest is a stable function of the file bytes.
  auto d1 = weight_digest(path);
  auto d2 = weight_digest(path);
  CHECK(d1 == d2);

  // load_model rebuilds a usable model whose forward matches.
  LoadedModel lm = load_model(path);
  REQUIRE(lm.model != nullptr);
  Tensor p = rand_patch(1, Rng(56));
  auto orig = m.stage_forward(nullptr, 1, p, {}, RunOptions::infer());
  auto rest = lm.model->stage_forward(nullptr, 1, p, {}, RunOptions::infer());
  CHECK(std::memcmp(orig.estimate.data(), rest.estimate.data(),
                    sizeof(float) * p.count()) == 0);
  fs::remove(path);
}

TEST_CASE("every build kind survives a save/load/forward cycle") {
  namespace fs = std::filesystem;
  for (WeightKind kind : {WeightKind::kResidual, WeightKind::kPrediction,
                          WeightKind::kFull, WeightKind::kDecoding}) {
    const std::string path =
        (fs::temp_directory_path() / ("r2i_k" + std::to_string(int(kind)) + ".r2iw"))
            .string();
    Model m = Model::build(model_kind_of(kind), 2, 60 + uint64_t(kind));
    WeightFile file;
    file.kind = kind;
    file.stages = 2;
    file.seed = 60 + uint64_t(kind);
    for (const auto& name : m.params().names())
      file.params.create(name, m.params().at(name));
    save_weights(path, file);
    LoadedModel lm = load_model(path);
    REQUIRE(lm.model != nullptr);
    CHECK(lm.model->kind() == model_kind_of(kind));
    fs::remove(path);
  }
}
