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

#include <cstring>
#include <filesystem>
#include <fstream>

#include "r2i/grad_check.hpp"
#include "r2i/losses.hpp"
#include "r2i/train.hpp"
#include "support/helpers.hpp"
#include "support/stage_oracle.hpp"

using namespace r2i;

namespace {

Tensor rand_patches(int n, uint64_t seed) {
  return r2i::test::rand_uniform<float>(Shape(n, 3, 32, 32), Rng(seed));
}

double sum_sq_of(const Tensor& t) {
  double acc = 0;
  for (int64_t i = 0; i < t.count(); ++i)
    acc += double(t.data()[i]) * t.data()[i];
  return acc;
}

void zero_params_matching(ParamSet& params, const std::string& needle) {
  for (const auto& name : params.names()) {
    if (name.find(needle) != std::string::npos) {
      Tensor& t = params.at(name);
      std::memset(t.data(), 0, sizeof(float) * t.count());
    }
  }
}

template <typename S>
void copy_common_params(const ParamSetT<S>& src, ParamSetT<S>& dst) {
  for (const auto& name : dst.names()) {
    if (!src.contains(name)) continue;
    const auto& from = src.at(name);
    auto& to = dst.at(name);
    REQUIRE(from.shape() == to.shape());
    std::memcpy(to.data(), from.data(), sizeof(S) * size_t(to.count()));
  }
}

}  // namespace

TEST_CASE("residual objective with zeroed prediction heads") {
  Model m = Model::build(ModelKind::kResidual, 3, 1);
  zero_params_matching(m.params(), "/pred/");
  Tensor p = rand_patches(2, 2);
  Tape tape;
  auto loss = loss_residual(&tape, m, p, RunOptions::infer());
  const double p_energy = sum_sq_of(p);
  // Every estimate is tanh(0) = 0, so each residual stays P.
  CHECK(loss.total_sum == doctest::Approx(3 * p_energy).epsilon(1e-6));
  for (double s : loss.stage_sum)
    CHECK(s == doctest::Approx(p_energy).epsilon(1e-6));
}

TEST_CASE("kind checks on the objectives") {
  Model residual = Model::build(ModelKind::kResidual, 1, 3);
  Model decoding = Model::build(ModelKind::kDecoding, 1, 3);
  Tensor p = rand_patches(1, 4);
  Tape tape;
  CHECK_THROWS_AS(loss_residual(&tape, decoding, p, RunOptions::infer()),
                  ArgError);
  CHECK_THROWS_AS(loss_r2i(&tape, residual, p, RunOptions::infer()), ArgError);
}

TEST_CASE("single-stage residual and R2I objectives coincide exactly") {
  // Same weights, both heads reduce to tanh(conv(.)); the loss values must
  // agree bit for bit.
  Model residual = Model::build(ModelKind::kResidual, 1, 5);
  Model prediction = Model::build(ModelKind::kPrediction, 1, 5);
  copy_common_params(residual.params(), prediction.params());
  Tensor p = rand_patches(2, 6);
  Tape t1, t2;
  auto a = loss_residual(&t1, residual, p, RunOptions::infer());
  auto b = loss_r2i(&t2, prediction, p, RunOptions::infer());
  CHECK(a.total_sum == b.total_sum);
  CHECK(a.stage_sum[0] == b.stage_sum[0]);
}

TEST_CASE("single-stage zero-output estimate costs the patch energy") {
  Model m = Model::build(ModelKind::kDecoding, 1, 7);
  zero_params_matching(m.params(), "/pred/");
  Tensor p = rand_patches(1, 8);
  Tape tape;
  auto loss = loss_r2i(&tape, m, p, RunOptions::infer());
  CHECK(loss.total_sum == doctest::Approx(sum_sq_of(p)).epsilon(1e-6));
}

TEST_CASE("losses are non-negative with per-stage components summing up") {
  Model m = Model::build(ModelKind::kFull, 3, 9);
  Tensor p = rand_patches(2, 10);
  Tape tape;
  auto loss = loss_r2i(&tape, m, p, RunOptions::infer());
  double acc = 0;
  for (double s : loss.stage_sum) {
    CHECK(s >= 0);
    acc += s;
  }
  CHECK(loss.total_sum == doctest::Approx(acc).epsilon(1e-9));
  CHECK(loss.total_mean > 0);
}

TEST_CASE("r2i objective matches the straight-line oracle") {
  Model m = Model::build(ModelKind::kDecoding, 2, 11);
  Tensor p = rand_patches(1, 12);

  // Library value on the double core with identical weights.
  ModelT<double> md = ModelT<double>::build(ModelKind::kDecoding, 2, 11);
  for (const auto& name : m.params().names()) {
    const Tensor& from = m.params().at(name);
    auto& to = md.params().at(name);
    for (int64_t i = 0; i < from.count(); ++i)
      to.data()[i] = double(from.data()[i]);
  }
  TensorT<double> pd = p.cast<double>();
  TapeT<double> tape;
  auto loss =
      loss_r2i<double>(&tape, md, pd, RunOptions::infer());

  r2i::test::Plane patch = r2i::test::Plane::zeros(3, 32, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) patch.at(c, y, x) = double(p.at(0, c, y, x));
  const double oracle = r2i::test::loss_r2i_oracle(m.params(), patch);
  CHECK(loss.total_sum == doctest::Approx(oracle).epsilon(1e-9));

  // The float core agrees to well under the coarse tolerance.
  Tape tf;
  auto loss_f = loss_r2i(&tf, m, p, RunOptions::infer());
  CHECK(loss_f.total_sum == doctest::Approx(oracle).epsilon(1e-5));
}

TEST_CASE("inpainting objective: zero net costs the patch energy") {
  InpaintNet net = InpaintNet::build_multiscale(13);
  zero_params_matching(net.params(), "/rgb/");
  Tensor p = rand_patches(2, 14);
  Tensor ctx = Tensor::zeros(Shape(2, 3, 64, 64));
  Tape tape;
  auto loss = loss_inpaint(&tape, net, p, ctx, BnMode::kInfer);
  CHECK(loss.inpaint_sum == doctest::Approx(sum_sq_of(p)).epsilon(1e-6));
  CHECK(loss.has_inpaint);

  Tensor empty;
  Tape t2;
  CHECK_THROWS_AS(loss_inpaint(&t2, net, p, empty, BnMode::kInfer), ArgError);
}

TEST_CASE("inpainting gradient matches finite differences on a toy block") {
  // One multi-scale block, crop, tanh: the Theta_I path in miniature.
  ParamSetT<double> params;
  Rng rng(15);
  TensorT<double> ctx = r2i::test::rand_uniform<double>(Shape(1, 2, 8, 8),
                                                        rng.stream("ctx"));
  params.create("b1/weight", msra_init<double>(Shape(2, 2, 3, 3), 18,
                                               rng.stream("w1")));
  params.create("b1/bias", TensorT<double>::zeros(Shape(2, 1, 1, 1)));
  params.create("b2/weight", msra_init<double>(Shape(2, 2, 3, 3), 18,
                                               rng.stream("w2")));
  params.create("b2/bias", TensorT<double>::zeros(Shape(2, 1, 1, 1)));
  TensorT<double> target =
      r2i::test::rand_uniform<double>(Shape(1, 4, 4, 4), rng.stream("t"));
  auto forward = [&](TapeT<double>& tape) {
    std::vector<TensorT<double>> branches;
    for (const char* base : {"b1", "b2"}) {
      ConvSpec s;
      s.in_channels = 2;
      s.out_channels = 2;
      s.kernel = 3;
      s.dilation = base[1] == '1' ? 1 : 2;
      s.pad = s.dilation;
      branches.push_back(conv2d(&tape, ctx, s,
                                params.at(std::string(base) + "/weight"),
                                params.at(std::string(base) + "/bias")));
    }
    TensorT<double> cat = concat_channels(&tape, branches);
    TensorT<double> crp = crop(&tape, cat, 4, 4, 4, 4);
    TensorT<double> pred = tanh_op(&tape, crp);
    TensorT<double> diff = sub(&tape, target, pred);
    return scale(&tape, sum_sq(&tape, diff), 1.0 / double(diff.count()));
  };
  auto report = grad_check<double>(params, forward, 1e-4, 8, rng.stream("p"));
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("joint objective decomposes when the inpainting net is zeroed") {
  Model joint = Model::build(ModelKind::kDecoding, 2, 16, /*joint_head=*/true);
  Model plain = Model::build(ModelKind::kDecoding, 2, 16);
  copy_common_params(joint.params(), plain.params());
  InpaintNet net = InpaintNet::build_multiscale(17);
  for (const auto& name : net.params().names()) {
    Tensor& t = net.params().at(name);
    std::memset(t.data(), 0, sizeof(float) * t.count());
  }
  Tensor p = rand_patches(2, 18);
  Tensor ctx = Tensor::zeros(Shape(2, 3, 64, 64));

  Tape t1, t2;
  auto lj = loss_joint(&t1, joint, net, p, ctx, RunOptions::infer());
  auto lr = loss_r2i(&t2, plain, p, RunOptions::infer());
  const double expected = lr.total_sum + sum_sq_of(p);
  CHECK(lj.total_sum == doctest::Approx(expected).epsilon(1e-5));
  CHECK(lj.inpaint_sum == doctest::Approx(sum_sq_of(p)).epsilon(1e-6));
}

TEST_CASE("joint objective rejects wrong configurations") {
  Model plain = Model::build(ModelKind::kDecoding, 1, 19);
  InpaintNet net = InpaintNet::build_multiscale(20);
  Tensor p = rand_patches(1, 21);
  Tensor ctx = Tensor::zeros(Shape(1, 3, 64, 64));
  Tape tape;
  CHECK_THROWS_AS(loss_joint(&tape, plain, net, p, ctx, RunOptions::infer()),
                  ArgError);
  Model joint = Model::build(ModelKind::kDecoding, 1, 19, true);
  Tensor empty;
  CHECK_THROWS_AS(loss_joint(&tape, joint, net, p, empty, RunOptions::infer()),
                  ArgError);
}

TEST_CASE("inpainting gradients collect one contribution per stage plus its own") {
  // d(joint)/d(theta_I) must equal the sum of gradients of the inpainting
  // term and of each per-stage term computed in isolation.
  Model joint = Model::build(ModelKind::kDecoding, 2, 22, /*joint_head=*/true);
  InpaintNet net = InpaintNet::build_multiscale(23);
  Tensor p = rand_patches(1, 24);
  Tensor ctx = Tensor::zeros(Shape(1, 3, 64, 64));
  const std::string probe = "inp/rgb/weight";
  const RunOptions run = RunOptions::infer();

  auto grads_of = [&](int which) {
    // which: -1 = inpainting term, s >= 1 = that stage's term only.
    net.params().zero_grads();
    joint.params().zero_grads();
    Tape tape;
    auto inp = net.forward(&tape, ctx, BnMode::kInfer);
    Tensor residual = sub(&tape, p, inp.pred);
    Tensor objective;
    if (which == -1) {
      objective = scale(&tape, sum_sq(&tape, residual),
                        1.f / float(residual.count()));
    } else {
      CarryT<float> carry;
      Tensor r = residual;
      for (int s = 1; s <= which; ++s) {
        auto out = joint.stage_forward(&tape, s, r, carry, run, &inp.pred_pre);
        Tensor diff = sub(&tape, p, out.estimate);
        if (s == which)
          objective = scale(&tape, sum_sq(&tape, diff), 1.f / float(diff.count()));
        r = diff;
        carry = std::move(out.carry);
      }
    }
    tape.backward(objective);
    const Tensor& t = net.params().at(probe);
    return std::vector<float>(t.grad(), t.grad() + t.count());
  };

  std::vector<float> summed(size_t(net.params().at(probe).count()), 0.f);
  for (int which : {-1, 1, 2}) {
    auto g = grads_of(which);
    for (size_t i = 0; i < g.size(); ++i) summed[i] += g[i];
  }

  net.params().zero_grads();
  joint.params().zero_grads();
  Tape tape;
  auto loss = loss_joint(&tape, joint, net, p, ctx, run);
  tape.backward(loss.objective);
  const Tensor& t = net.params().at(probe);
  double max_abs = 0;
  for (int64_t i = 0; i < t.count(); ++i)
    max_abs = std::max(max_abs, std::abs(double(t.grad()[i])));
  REQUIRE(max_abs > 0);
  for (int64_t i = 0; i < t.count(); ++i)
    CHECK(t.grad()[i] ==
          doctest::Approx(summed[size_t(i)]).epsilon(2e-3).scale(max_abs));
}

TEST_CASE("learning-rate schedule hits the reference breakpoints") {
  CHECK(lr_schedule(LrProfile::kR2i, 0, 60000) == doctest::Approx(1e-3));
  CHECK(lr_schedule(LrProfile::kR2i, 29999, 60000) == doctest::Approx(1e-3));
  CHECK(lr_schedule(LrProfile::kR2i, 30000, 60000) == doctest::Approx(1e-4));
  CHECK(lr_schedule(LrProfile::kR2i, 50000, 60000) == doctest::Approx(1e-5));
  CHECK(lr_schedule(LrProfile::kIr2i, 0, 110000) == doctest::Approx(1e-3));
  CHECK(lr_schedule(LrProfile::kIr2i, 64999, 110000) == doctest::Approx(1e-4));
  CHECK(lr_schedule(LrProfile::kIr2i, 100000, 110000) == doctest::Approx(1e-6));

  // Desk-scale runs scale the breakpoints proportionally.
  auto drops = lr_drop_iterations(LrProfile::kR2i, 2000);
  REQUIRE(drops.size() == 2);
  CHECK(drops[0] == 1000);
  CHECK(drops[1] == 1500);
  auto jd = lr_drop_iterations(LrProfile::kIr2i, 110000);
  REQUIRE(jd.size() == 3);
  CHECK(jd[0] == 30000);
  CHECK(jd[1] == 65000);
  CHECK(jd[2] == 90000);
}

TEST_CASE("train config parsing, defaults, and validation") {
  Config cfg = Config::parse_string(
      "model.kind = decoding\nmodel.stages = 2\ntrain.iterations = 10\n"
      "train.dataset = /tmp/nowhere\ntrain.batch_size = 4\n");
  TrainConfig tc = TrainConfig::from_config(cfg);
  CHECK(tc.kind == WeightKind::kDecoding);
  CHECK(tc.stages == 2);

  Config missing = Config::parse_string("model.kind = decoding\n");
  CHECK_THROWS_AS(TrainConfig::from_config(missing), ArgError);

  Config unknown = Config::parse_string(
      "model.kind = decoding\ntrain.dataset = x\ntrain.typo = 1\n");
  CHECK_THROWS_WITH_AS(TrainConfig::from_config(unknown),
                       doctest::Contains(":3"), ArgError);

  Config bad_drop = Config::parse_string(
      "train.dataset = x\ntrain.iterations = 100\n"
      "train.lr_drop_iterations = 50, 200\n");
  CHECK_THROWS_AS(TrainConfig::from_config(bad_drop), ArgError);

  CHECK(TrainConfig::dump_defaults().find("train.base_lr") != std::string::npos);
}

TEST_CASE("config parser reports line numbers and duplicates") {
  CHECK_THROWS_WITH_AS(Config::parse_string("a = 1\nnot a pair\n"),
                       doctest::Contains(":2"), ArgError);
  CHECK_THROWS_AS(Config::parse_string("a = 1\na = 2\n"), ArgError);
  Config c = Config::parse_string("# comment\n a = 3 # trailing\n");
  CHECK(c.get_int("a", 0) == 3);
}

TEST_CASE("short training run reduces the loss and is reproducible") {
  // 200 iterations, decoding S=2, on 64 synthetic patches.
  PatchDataset ds = PatchDataset::from_images(
      r2i::test::synth_corpus(4, 128, 128, 900));  // 64 aligned patches
  REQUIRE(ds.patch_count() == 64);

  namespace fs = std::filesystem;
  TrainConfig tc;
  tc.kind = WeightKind::kDecoding;
  tc.stages = 2;
  tc.iterations = 200;
  tc.batch_size = 8;
  tc.seed = 7;
  tc.checkpoint_every = 0;
  tc.out_dir = (fs::temp_directory_path() / "r2i_train_smoke").string();

  TrainResult r1 = train(tc, ds);
  REQUIRE(int64_t(r1.history.size()) == tc.iterations);
  const double first = r1.history.front().total;
  const double last = r1.history.back().total;
  CHECK(last < first);

  // Loss log has one column per stage.
  std::ifstream csv(r1.loss_csv_path);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "iteration,lr,total_loss,stage_1,stage_2");
  for (const auto& row : r1.history) CHECK(row.stages.size() == 2);

  // Same seed, same trajectory.
  TrainResult r2 = train(tc, ds);
  REQUIRE(r2.history.size() == r1.history.size());
  for (size_t i = 0; i < r1.history.size(); i += 37)
    CHECK(r1.history[i].total == r2.history[i].total);
  fs::remove_all(tc.out_dir);
}
