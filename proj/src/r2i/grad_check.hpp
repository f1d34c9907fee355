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

#ifndef R2I_GRAD_CHECK_HPP_
#define R2I_GRAD_CHECK_HPP_

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "r2i/params.hpp"
#include "r2i/tape.hpp"
#include "r2i/tensor.hpp"

namespace r2i {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0;
  int checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0;

  bool within(double tol) const { return max_rel_err < tol; }
};

// Compares analytic gradients against central finite differences. The
// forward callable must rebuild the graph on each call and return the scalar
// objective; it is evaluated 1 + 2 * (entries checked) times. Refuses graphs
// containing stochastic nodes, which would make the difference quotient
// meaningless.
//
// Per tensor, up to max_entries_per_tensor entries are probed (all of them
// for small tensors); relative error uses max(|a|, |n|, floor) as the
// denominator so near-zero gradients are compared absolutely.
template <typename S>
GradCheckReport grad_check(
    ParamSetT<S>& params,
    const std::function<TensorT<S>(TapeT<S>&)>& forward, double fd_step,
    int max_entries_per_tensor, Rng rng, double rel_floor = 1e-3) {
  params.zero_grads();
  TapeT<S> tape;
  TensorT<S> loss = forward(tape);
  if (tape.has_stochastic())
    throw ArgError("grad_check: non-deterministic node in subgraph: " +
                   tape.stochastic_op());
  tape.backward(loss);

  GradCheckReport report;
  for (const auto& name : params.names()) {
    if (!is_trainable_param(name)) continue;
    auto& p = params.at(name);
    const int64_t cnt = p.count();
    std::vector<int64_t> picks;
    if (cnt <= max_entries_per_tensor) {
      for (int64_t i = 0; i < cnt; ++i) picks.push_back(i);
    } else {
      for (int k = 0; k < max_entries_per_tensor; ++k)
        picks.push_back(int64_t(rng.next_u64() % uint64_t(cnt)));
    }
    GradCheckEntry entry;
    entry.param = name;
    for (int64_t i : picks) {
      const S saved = p.data()[i];
      p.data()[i] = S(double(saved) + fd_step);
      TapeT<S> t1;
      const double f_plus = double(forward(t1).data()[0]);
      p.data()[i] = S(double(saved) - fd_step);
      TapeT<S> t2;
      const double f_minus = double(forward(t2).data()[0]);
      p.data()[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * fd_step);
      const double analytic = double(p.grad()[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric),
                                     rel_floor});
      entry.max_rel_err =
          std::max(entry.max_rel_err, std::abs(analytic - numeric) / denom);
      ++entry.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace r2i

#endif  // R2I_GRAD_CHECK_HPP_
