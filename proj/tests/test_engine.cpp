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

#include "r2i/gemm.hpp"
#include "r2i/grad_check.hpp"
#include "r2i/ops.hpp"
#include "r2i/params.hpp"
#include "support/helpers.hpp"

using namespace r2i;

TEST_CASE("rng determinism and stream independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng s1 = Rng(42).stream("alpha");
  Rng s2 = Rng(42).stream("beta");
  CHECK(s1.next_u64() != s2.next_u64());

  // Stream derivation does not depend on draw order elsewhere.
  Rng root(7);
  Rng before = root.stream("x");
  root.next_u64();
  Rng after = Rng(7).stream("x");
  CHECK(before.next_u64() == after.next_u64());
}

TEST_CASE("tensor shape and data invariants") {
  CHECK_THROWS_AS(Tensor::from_values(Shape(1, 1, 2, 2), {1.f, 2.f, 3.f}),
                  ArgError);
  Tensor t = Tensor::zeros(Shape(2, 3, 4, 5));
  CHECK(t.count() == 120);
  CHECK(t.all_finite());
  t.data()[7] = std::numeric_limits<float>::quiet_NaN();
  CHECK(!t.all_finite());

  Tensor shared = t;
  CHECK(shared.same_storage(t));
  Tensor copy = t.clone();
  CHECK(!copy.same_storage(t));
}

TEST_CASE("msra_init variance, determinism, errors") {
  // Sample variance of a >= 1e5 draw buffer at fan_in 27 approximates 2/27.
  Tensor big = msra_init<float>(Shape(1, 1, 320, 320), 27, Rng(3).stream("v"));
  REQUIRE(big.count() >= 100000);
  double mean = 0;
  for (int64_t i = 0; i < big.count(); ++i) mean += big.data()[i];
  mean /= double(big.count());
  double var = 0;
  for (int64_t i = 0; i < big.count(); ++i) {
    const double d = big.data()[i] - mean;
    var += d * d;
  }
  var /= double(big.count());
  const double expected = 2.0 / 27.0;
  CHECK(var == doctest::Approx(expected).epsilon(0.05));

  Tensor w1 = msra_init<float>(Shape(64, 3, 3, 3), 27, Rng(9).stream("w"));
  Tensor w2 = msra_init<float>(Shape(64, 3, 3, 3), 27, Rng(9).stream("w"));
  CHECK(std::memcmp(w1.data(), w2.data(), sizeof(float) * w1.count()) == 0);

  CHECK_THROWS_AS(msra_init<float>(Shape(4, 1, 1, 1), 0, Rng(1)), ArgError);
}

TEST_CASE("backward on sum of squares") {
  ParamSet params;
  Tensor& x = params.create(
      "x/weight", Tensor::from_values(Shape(1, 1, 1, 3), {1.f, 2.f, 3.f}));
  params.zero_grads();
  Tape tape;
  Tensor loss = sum_sq(&tape, x);
  CHECK(loss.data()[0] == doctest::Approx(14.0));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward leaves unused parameters at exactly zero") {
  ParamSet params;
  Tensor& used = params.create("used/weight",
                               Tensor::from_values(Shape(1, 1, 1, 2), {1.f, -2.f}));
  Tensor& unused = params.create("unused/weight",
                                 Tensor::from_values(Shape(1, 1, 1, 2), {5.f, 6.f}));
  params.zero_grads();
  Tape tape;
  Tensor loss = sum_sq(&tape, used);
  tape.backward(loss);
  CHECK(unused.grad()[0] == 0.f);
  CHECK(unused.grad()[1] == 0.f);
  CHECK(used.grad()[0] != 0.f);
}

TEST_CASE("backward rejects non-scalar tails") {
  Tape tape;
  Tensor x = Tensor::zeros(Shape(1, 1, 2, 2));
  CHECK_THROWS_AS(tape.backward(x), ArgError);
}

namespace {

// Wires a random input tensor as a checkable parameter so finite
// differences also cover the gradient with respect to layer inputs.
template <typename S>
TensorT<S>& add_input(ParamSetT<S>& params, Shape shape, Rng rng,
                      double lo = -1.0, double hi = 1.0) {
  return params.create("input/weight",
                       r2i::test::rand_uniform<S>(shape, rng, lo, hi));
}

}  // namespace

TEST_CASE("finite differences: conv2d variants (float core, 20 seeds)") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    ParamSetT<float> params;
    Rng rng(seed);
    ConvSpec spec;
    spec.in_channels = 3;
    spec.out_channels = 4;
    spec.kernel = 3;
    spec.stride = (seed % 2) ? 1 : 2;
    spec.dilation = (seed % 3 == 0) ? 2 : 1;
    spec.pad = spec.dilation;
    TensorT<float>& x = add_input(params, Shape(2, 3, 8, 8), rng.stream("x"));
    params.create("conv/weight",
                  msra_init<float>(Shape(4, 3, 3, 3), 27, rng.stream("w")));
    params.create("conv/bias",
                  r2i::test::rand_uniform<float>(Shape(4, 1, 1, 1),
                                                 rng.stream("b"), -0.1, 0.1));
    auto forward = [&](TapeT<float>& tape) {
      TensorT<float> y = conv2d(&tape, x, spec, params.at("conv/weight"),
                                params.at("conv/bias"));
      return scale(&tape, sum_sq(&tape, y), 1.f / float(y.count()));
    };
    auto report = grad_check<float>(params, forward, 6e-3, 6,
                                    rng.stream("pick"));
    CHECK_MESSAGE(report.max_rel_err < 1e-2, "seed ", seed, " err ",
                  report.max_rel_err);
  }
}

TEST_CASE("finite differences: deconv, batch norm, activations (float)") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    ParamSetT<float> params;
    Rng rng(seed + 100);
    TensorT<float>& x = add_input(params, Shape(2, 4, 4, 4), rng.stream("x"));
    const bool depthwise = seed % 2 == 0;
    const int groups = depthwise ? 4 : 1;
    params.create("up/weight",
                  msra_init<float>(Shape(4, 4 / groups, 2, 2), 4,
                                   rng.stream("w")));
    params.create("bn/bn_gamma",
                  r2i::test::rand_uniform<float>(Shape(4, 1, 1, 1),
                                                 rng.stream("g"), 0.5, 1.5));
    params.create("bn/bn_beta",
                  r2i::test::rand_uniform<float>(Shape(4, 1, 1, 1),
                                                 rng.stream("be"), -0.2, 0.2));
    params.create("bn/bn_mean", Tensor::zeros(Shape(4, 1, 1, 1)));
    params.create("bn/bn_var", Tensor::full(Shape(4, 1, 1, 1), 1.f));
    const BnMode bn_mode = seed % 3 == 0 ? BnMode::kInfer : BnMode::kTrain;
    auto forward = [&](TapeT<float>& tape) {
      TensorT<float> y = deconv2d(&tape, x, params.at("up/weight"), 4, groups);
      y = batch_norm(&tape, y, params.at("bn/bn_gamma"),
                     params.at("bn/bn_beta"), params.at("bn/bn_mean").clone(),
                     params.at("bn/bn_var").clone(), bn_mode);
      y = relu(&tape, y);
      y = tanh_op(&tape, y);
      return scale(&tape, sum_sq(&tape, y), 1.f / float(y.count()));
    };
    auto report =
        grad_check<float>(params, forward, 6e-3, 6, rng.stream("pick"));
    CHECK_MESSAGE(report.max_rel_err < 1e-2, "seed ", seed, " err ",
                  report.max_rel_err);
  }
}

TEST_CASE("finite differences: concat, crop, add, sub (double core)") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    ParamSetT<double> params;
    Rng rng(seed + 300);
    TensorT<double>& a =
        params.create("a/weight", r2i::test::rand_uniform<double>(
                                      Shape(1, 2, 6, 6), rng.stream("a")));
    TensorT<double>& b =
        params.create("b/weight", r2i::test::rand_uniform<double>(
                                      Shape(1, 3, 6, 6), rng.stream("b")));
    auto forward = [&](TapeT<double>& tape) {
      TensorT<double> cat = concat_channels(&tape, {a, b});
      TensorT<double> crp = crop(&tape, cat, 2, 2, 4, 4);
      TensorT<double> first = crop(&tape, crp, 0, 0, 4, 4);
      TensorT<double> sum = add(&tape, crp, first);
      TensorT<double> diff = sub(&tape, sum, crp);
      return scale(&tape, sum_sq(&tape, diff), 1.0 / double(diff.count()));
    };
    auto report =
        grad_check<double>(params, forward, 1e-4, 8, rng.stream("pick"));
    CHECK_MESSAGE(report.max_rel_err < 1e-5, "seed ", seed, " err ",
                  report.max_rel_err);
  }
}

TEST_CASE("finite differences tighten to 1e-5 with the double core") {
  ParamSetT<double> params;
  Rng rng(77);
  ConvSpec spec;
  spec.in_channels = 3;
  spec.out_channels = 5;
  spec.kernel = 3;
  spec.stride = 1;
  spec.pad = 1;
  TensorT<double>& x = add_input(params, Shape(1, 3, 8, 8), rng.stream("x"));
  params.create("conv/weight",
                msra_init<double>(Shape(5, 3, 3, 3), 27, rng.stream("w")));
  params.create("conv/bias", TensorT<double>::zeros(Shape(5, 1, 1, 1)));
  auto forward = [&](TapeT<double>& tape) {
    TensorT<double> y =
        conv2d(&tape, x, spec, params.at("conv/weight"), params.at("conv/bias"));
    y = tanh_op(&tape, y);
    return scale(&tape, sum_sq(&tape, y), 1.0 / double(y.count()));
  };
  auto report = grad_check<double>(params, forward, 1e-4, 10, rng.stream("p"));
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("grad_check identity pass-through is exact on dyadic values") {
  ParamSetT<double> params;
  params.create("x/weight",
                TensorT<double>::from_values(Shape(1, 1, 1, 2), {0.5, -0.25}));
  auto forward = [&](TapeT<double>& tape) {
    return sum_sq(&tape, params.at("x/weight"));
  };
  auto report = grad_check<double>(params, forward, 0.25, 4, Rng(1));
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("grad_check refuses stochastic subgraphs") {
  ParamSetT<float> params;
  TensorT<float>& x = params.create(
      "x/weight", Tensor::from_values(Shape(1, 1, 1, 2), {0.3f, -0.6f}));
  Rng noise(5);
  auto forward = [&](TapeT<float>& tape) {
    TensorT<float> b = binarize(&tape, x, BinarizerMode::kStochastic, &noise);
    return sum_sq(&tape, b);
  };
  CHECK_THROWS_WITH_AS(grad_check<float>(params, forward, 1e-3, 2, Rng(1)),
                       doctest::Contains("non-deterministic"), ArgError);
}

TEST_CASE("batch gradients are the sum of per-sample gradients") {
  Rng rng(11);
  ConvSpec spec;
  spec.in_channels = 2;
  spec.out_channels = 3;
  spec.kernel = 3;
  spec.stride = 1;
  spec.pad = 1;
  Tensor w = msra_init<float>(Shape(3, 2, 3, 3), 18, rng.stream("w"));
  Tensor b = Tensor::zeros(Shape(3, 1, 1, 1));
  Tensor batch = r2i::test::rand_uniform<float>(Shape(3, 2, 5, 5), rng.stream("x"));

  auto run = [&](const Tensor& input, Tensor& wg) {
    Tensor wl = wg;
    Tape tape;
    Tensor y = conv2d(&tape, input, spec, wl, b);
    Tensor loss = sum_sq(&tape, y);
    tape.backward(loss);
  };

  w.zero_grad();
  b.zero_grad();
  run(batch, w);
  std::vector<float> batch_grad(w.grad(), w.grad() + w.count());

  std::vector<float> summed(size_t(w.count()), 0.f);
  for (int i = 0; i < 3; ++i) {
    Tensor one = Tensor::zeros(Shape(1, 2, 5, 5));
    std::memcpy(one.data(), batch.data() + size_t(i) * 2 * 5 * 5,
                sizeof(float) * 2 * 5 * 5);
    w.zero_grad();
    b.zero_grad();
    run(one, w);
    for (int64_t k = 0; k < w.count(); ++k) summed[size_t(k)] += w.grad()[k];
  }
  for (int64_t k = 0; k < w.count(); ++k)
    CHECK(batch_grad[size_t(k)] ==
          doctest::Approx(summed[size_t(k)]).epsilon(1e-4));
}

TEST_CASE("forward is bitwise deterministic") {
  Rng rng(13);
  ConvSpec spec;
  spec.in_channels = 3;
  spec.out_channels = 8;
  spec.kernel = 3;
  spec.stride = 2;
  spec.pad = 1;
  Tensor x = r2i::test::rand_uniform<float>(Shape(2, 3, 16, 16), rng.stream("x"));
  Tensor w = msra_init<float>(Shape(8, 3, 3, 3), 27, rng.stream("w"));
  Tensor b = r2i::test::rand_uniform<float>(Shape(8, 1, 1, 1), rng.stream("b"));
  Tensor y1 = conv2d<float>(nullptr, x, spec, w, b);
  Tensor y2 = conv2d<float>(nullptr, x, spec, w, b);
  CHECK(std::memcmp(y1.data(), y2.data(), sizeof(float) * y1.count()) == 0);
}

TEST_CASE("gemm results do not depend on the BLAS thread setting") {
  Rng rng(17);
  Tensor a = r2i::test::rand_uniform<float>(Shape(1, 1, 64, 192), rng.stream("a"));
  Tensor b = r2i::test::rand_uniform<float>(Shape(1, 1, 192, 96), rng.stream("b"));
  Tensor c1 = Tensor::zeros(Shape(1, 1, 64, 96));
  Tensor c2 = Tensor::zeros(Shape(1, 1, 64, 96));
  set_blas_threads(1);
  gemm(false, false, 64, 96, 192, 1.f, a.data(), 192, b.data(), 96, 0.f,
       c1.data(), 96);
  set_blas_threads(4);
  gemm(false, false, 64, 96, 192, 1.f, a.data(), 192, b.data(), 96, 0.f,
       c2.data(), 96);
  set_blas_threads(1);
  CHECK(std::memcmp(c1.data(), c2.data(), sizeof(float) * c1.count()) == 0);
}

TEST_CASE("adam first step and zero-gradient behavior") {
  ParamSet params;
  Tensor& w = params.create("w/weight", Tensor::from_values(Shape(1, 1, 1, 1), {0.f}));
  params.zero_grads();
  w.grad()[0] = 1.f;
  AdamState adam;
  adam.step(params, 1e-3);
  CHECK(w.data()[0] == doctest::Approx(-1e-3).epsilon(1e-6));

  // Zero gradient: parameters must not move.
  ParamSet params2;
  Tensor& v = params2.create("v/weight",
                             Tensor::from_values(Shape(1, 1, 1, 1), {1.25f}));
  params2.zero_grads();
  AdamState adam2;
  adam2.step(params2, 1e-3);
  CHECK(v.data()[0] == 1.25f);
}

TEST_CASE("adam matches the scalar recurrence and converges on (w-3)^2") {
  // Independent recurrence on doubles.
  double w_ref = 0, m = 0, v = 0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2 * (w_ref - 3);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w_ref -= lr * mh / (std::sqrt(vh) + eps);
  }
  CHECK(std::abs(w_ref - 3) < 0.1);

  ParamSet params;
  Tensor& w = params.create("w/weight", Tensor::from_values(Shape(1, 1, 1, 1), {0.f}));
  AdamState adam;
  for (int t = 1; t <= 100; ++t) {
    params.zero_grads();
    w.grad()[0] = 2 * (w.data()[0] - 3);
    adam.step(params, lr);
  }
  CHECK(w.data()[0] == doctest::Approx(w_ref).epsilon(1e-4));
  CHECK(std::abs(w.data()[0] - 3) < 0.1);
}

TEST_CASE("adam rejects state/parameter shape mismatches") {
  AdamState adam;
  {
    ParamSet params;
    params.create("w/weight", Tensor::zeros(Shape(1, 1, 1, 2)));
    params.zero_grads();
    adam.step(params, 1e-3);
  }
  ParamSet other;
  other.create("w/weight", Tensor::zeros(Shape(1, 1, 1, 3)));
  other.zero_grads();
  CHECK_THROWS_AS(adam.step(other, 1e-3), ArgError);
}
