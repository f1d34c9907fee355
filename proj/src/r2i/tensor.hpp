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

#ifndef R2I_TENSOR_HPP_
#define R2I_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "r2i/common.hpp"

namespace r2i {

// Dense NCHW shape, W fastest.
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  int64_t count() const {
    return int64_t(n) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense tensor with an optional gradient buffer of identical shape.
// Copies are shallow: value and gradient storage are shared, so a tensor
// recorded on the tape and the same tensor seen by a consumer alias one
// buffer pair. Fresh storage requires an explicit clone().
template <typename S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;

  static TensorT zeros(Shape shape) {
    TensorT t;
    t.shape_ = shape;
    t.storage_ = std::make_shared<Storage>();
    t.storage_->value.assign(size_t(shape.count()), S(0));
    return t;
  }

  static TensorT full(Shape shape, S v) {
    TensorT t = zeros(shape);
    for (auto& x : t.storage_->value) x = v;
    return t;
  }

  static TensorT from_values(Shape shape, std::vector<S> values) {
    R2I_CHECK_ARG(int64_t(values.size()) == shape.count(),
                  "tensor data length must equal n*c*h*w");
    TensorT t;
    t.shape_ = shape;
    t.storage_ = std::make_shared<Storage>();
    t.storage_->value = std::move(values);
    return t;
  }

  bool empty() const { return storage_ == nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t count() const { return shape_.count(); }

  S* data() { return storage_->value.data(); }
  const S* data() const { return storage_->value.data(); }

  S& at(int n, int c, int h, int w) {
    return storage_->value[idx(n, c, h, w)];
  }
  S at(int n, int c, int h, int w) const {
    return storage_->value[idx(n, c, h, w)];
  }

  bool has_grad() const { return storage_ && !storage_->grad.empty(); }

  // Allocates (zeroed) gradient storage on first use; shared by all copies.
  S* grad() {
    if (storage_->grad.empty())
      storage_->grad.assign(storage_->value.size(), S(0));
    return storage_->grad.data();
  }
  const S* grad() const { return storage_->grad.data(); }

  void zero_grad() {
    if (has_grad()) std::fill(storage_->grad.begin(), storage_->grad.end(), S(0));
  }
  void drop_grad() {
    if (storage_) storage_->grad.clear();
  }

  TensorT clone() const {
    TensorT t;
    t.shape_ = shape_;
    t.storage_ = std::make_shared<Storage>();
    t.storage_->value = storage_->value;
    return t;
  }

  template <typename T>
  TensorT<T> cast() const {
    std::vector<T> v(storage_->value.begin(), storage_->value.end());
    return TensorT<T>::from_values(shape_, std::move(v));
  }

  bool all_finite() const {
    for (S v : storage_->value)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  bool same_storage(const TensorT& o) const { return storage_ == o.storage_; }

 private:
  struct Storage {
    std::vector<S> value;
    std::vector<S> grad;  // empty until requested
  };

  size_t idx(int n, int c, int h, int w) const {
    return ((size_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_;
  std::shared_ptr<Storage> storage_;
};

using Tensor = TensorT<float>;

}  // namespace r2i

#endif  // R2I_TENSOR_HPP_
