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

#ifndef R2I_TAPE_HPP_
#define R2I_TAPE_HPP_

#include <functional>
#include <string>
#include <vector>

#include "r2i/common.hpp"
#include "r2i/tensor.hpp"

namespace r2i {

// Dynamic per-forward recording. Each op appends a node whose backward
// closure reads the gradient of its output tensor and accumulates into the
// gradients of its inputs. Creation order is a valid topological order, so
// the backward pass is a single reverse sweep.
//
// Gradient buffers are allocated lazily: a node whose output never received
// a gradient did not contribute to the objective and is skipped, which also
// leaves unreachable parameters with exactly zero gradient.
template <typename S>
class TapeT {
 public:
  struct Node {
    const char* op;
    TensorT<S> out;
    std::function<void()> backward;
    bool stochastic;
  };

  void record(const char* op, TensorT<S> out, std::function<void()> backward,
              bool stochastic = false) {
    nodes_.push_back(Node{op, std::move(out), std::move(backward), stochastic});
  }

  // Seeds d(tail)/d(tail) = 1 and sweeps the tape in reverse.
  void backward(TensorT<S>& tail) {
    R2I_CHECK_ARG(!tail.empty() && tail.count() == 1,
                  "backward tail must be a scalar loss, got shape " +
                      tail.shape().str());
    tail.grad()[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->out.has_grad()) continue;
      if (it->backward) it->backward();
    }
  }

  bool has_stochastic() const {
    for (const auto& n : nodes_)
      if (n.stochastic) return true;
    return false;
  }

  // Name of the first stochastic node, empty if none.
  std::string stochastic_op() const {
    for (const auto& n : nodes_)
      if (n.stochastic) return n.op;
    return {};
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace r2i

#endif  // R2I_TAPE_HPP_
