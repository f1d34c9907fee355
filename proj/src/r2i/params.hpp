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

#ifndef R2I_PARAMS_HPP_
#define R2I_PARAMS_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "r2i/common.hpp"
#include "r2i/rng.hpp"
#include "r2i/tensor.hpp"

namespace r2i {

// Parameter roles are encoded as name suffixes: .../weight, .../bias,
// .../bn_gamma, .../bn_beta, .../bn_mean, .../bn_var. Running statistics
// (bn_mean, bn_var) are state, not trainable parameters.
inline bool is_trainable_param(const std::string& name) {
  auto ends_with = [&](const char* suf) {
    const size_t len = std::strlen(suf);
    return name.size() >= len && name.compare(name.size() - len, len, suf) == 0;
  };
  return !ends_with("/bn_mean") && !ends_with("/bn_var");
}

// Named parameter tensors in a stable (insertion) order. Names are unique.
template <typename S>
class ParamSetT {
 public:
  TensorT<S>& create(const std::string& name, TensorT<S> value) {
    R2I_CHECK_ARG(map_.find(name) == map_.end(),
                  "parameter name already exists: " + name);
    order_.push_back(name);
    return map_.emplace(name, std::move(value)).first->second;
  }

  bool contains(const std::string& name) const {
    return map_.find(name) != map_.end();
  }

  TensorT<S>& at(const std::string& name) {
    auto it = map_.find(name);
    R2I_CHECK_ARG(it != map_.end(), "unknown parameter: " + name);
    return it->second;
  }
  const TensorT<S>& at(const std::string& name) const {
    auto it = map_.find(name);
    R2I_CHECK_ARG(it != map_.end(), "unknown parameter: " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  int64_t trainable_count() const {
    int64_t total = 0;
    for (const auto& n : order_)
      if (is_trainable_param(n)) total += map_.at(n).count();
    return total;
  }

  void zero_grads() {
    for (const auto& n : order_) {
      auto& t = map_.at(n);
      if (is_trainable_param(n)) {
        t.grad();  // ensure allocated so unreachable parameters read as zero
        t.zero_grad();
      }
    }
  }

  template <typename T>
  ParamSetT<T> cast() const {
    ParamSetT<T> out;
    for (const auto& n : order_) out.create(n, map_.at(n).template cast<T>());
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorT<S>> map_;
};

using ParamSet = ParamSetT<float>;

// Zero-mean Gaussian with variance 2/fan_in, where fan_in is the product of
// input channels and kernel area of the layer being initialized.
template <typename S>
TensorT<S> msra_init(Shape shape, int64_t fan_in, Rng rng) {
  R2I_CHECK_ARG(fan_in > 0, "msra_init: fan_in must be positive");
  TensorT<S> t = TensorT<S>::zeros(shape);
  const double stddev = std::sqrt(2.0 / double(fan_in));
  const int64_t cnt = t.count();
  for (int64_t i = 0; i < cnt; ++i)
    t.data()[i] = S(stddev * rng.next_gaussian());
  return t;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers per parameter plus the shared step counter.
template <typename S>
class AdamStateT {
 public:
  explicit AdamStateT(AdamConfig cfg = {}) : cfg_(cfg) {}

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Standard update with bias correction. Gradients are read, not cleared.
  void step(ParamSetT<S>& params, double lr) {
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (const auto& name : params.names()) {
      if (!is_trainable_param(name)) continue;
      auto& p = params.at(name);
      auto& m = moment(name, p.shape(), m1_);
      auto& v = moment(name, p.shape(), m2_);
      R2I_CHECK_ARG(m.shape() == p.shape() && v.shape() == p.shape(),
                    "adam state shape mismatch for " + name);
      const S* g = p.has_grad() ? p.grad() : nullptr;
      if (!g) continue;
      const int64_t cnt = p.count();
      S* pm = m.data();
      S* pv = v.data();
      S* pd = p.data();
      for (int64_t i = 0; i < cnt; ++i) {
        const double gi = g[i];
        const double mi = cfg_.beta1 * pm[i] + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * pv[i] + (1.0 - cfg_.beta2) * gi * gi;
        pm[i] = S(mi);
        pv[i] = S(vi);
        pd[i] = S(pd[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps));
      }
    }
  }

 private:
  TensorT<S>& moment(const std::string& name, Shape shape,
                     std::unordered_map<std::string, TensorT<S>>& store) {
    auto it = store.find(name);
    if (it == store.end())
      it = store.emplace(name, TensorT<S>::zeros(shape)).first;
    return it->second;
  }

  AdamConfig cfg_;
  int64_t step_ = 0;
  std::unordered_map<std::string, TensorT<S>> m1_, m2_;
};

using AdamState = AdamStateT<float>;

}  // namespace r2i

#endif  // R2I_PARAMS_HPP_
