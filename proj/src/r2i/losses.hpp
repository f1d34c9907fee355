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

#ifndef R2I_LOSSES_HPP_
#define R2I_LOSSES_HPP_

#include <vector>

#include "r2i/inpaint.hpp"
#include "r2i/model.hpp"

namespace r2i {

// Loss values in both normalizations. The sums are the literal
// sum-of-squares objectives; optimization uses the per-element means so the
// learning rate is insensitive to batch size. `objective` is the scalar
// tape node of the mean form.
template <typename S>
struct LossBreakdownT {
  double total_sum = 0;
  double total_mean = 0;
  std::vector<double> stage_sum;
  std::vector<double> stage_mean;
  double inpaint_sum = 0;
  double inpaint_mean = 0;
  bool has_inpaint = false;
  TensorT<S> objective;
};

using LossBreakdown = LossBreakdownT<float>;

namespace detail {

template <typename S>
void accumulate_term(TapeT<S>* tape, LossBreakdownT<S>& loss,
                     const TensorT<S>& diff, bool inpaint_term) {
  TensorT<S> term = sum_sq(tape, diff);
  const double sum = double(term.data()[0]);
  const double mean = sum / double(diff.count());
  TensorT<S> mean_node = scale(tape, term, S(1.0 / double(diff.count())));
  if (inpaint_term) {
    loss.inpaint_sum = sum;
    loss.inpaint_mean = mean;
    loss.has_inpaint = true;
  } else {
    loss.stage_sum.push_back(sum);
    loss.stage_mean.push_back(mean);
  }
  loss.total_sum += sum;
  loss.total_mean += mean;
  loss.objective = loss.objective.empty()
                       ? mean_node
                       : add(tape, loss.objective, mean_node);
}

}  // namespace detail

// Residual-chain objective: each stage models the previous stage's
// residual, and the loss compares its estimate against that residual.
template <typename S>
LossBreakdownT<S> loss_residual(TapeT<S>* tape, ModelT<S>& model,
                                const TensorT<S>& patches,
                                const RunOptions& run) {
  R2I_CHECK_ARG(model.kind() == ModelKind::kResidual,
                "loss_residual requires the residual-chain model");
  LossBreakdownT<S> loss;
  TensorT<S> residual = patches;
  CarryT<S> carry;
  for (int s = 1; s <= model.stages(); ++s) {
    StageResultT<S> out = model.stage_forward(tape, s, residual, carry, run);
    TensorT<S> diff = sub(tape, residual, out.estimate);
    detail::accumulate_term(tape, loss, diff, /*inpaint_term=*/false);
    residual = diff;  // R_s = R_{s-1} - estimate_s
    carry = std::move(out.carry);
  }
  return loss;
}

// Residual-to-image objective: every stage still consumes a residual but is
// scored against the original patch.
template <typename S>
LossBreakdownT<S> loss_r2i(TapeT<S>* tape, ModelT<S>& model,
                           const TensorT<S>& patches, const RunOptions& run) {
  R2I_CHECK_ARG(model.kind() != ModelKind::kResidual,
                "loss_r2i requires a residual-to-image model");
  R2I_CHECK_ARG(!model.joint_head(),
                "loss_r2i on a joint-head model; use loss_joint");
  LossBreakdownT<S> loss;
  TensorT<S> residual = patches;  // R_0 = P
  CarryT<S> carry;
  for (int s = 1; s <= model.stages(); ++s) {
    StageResultT<S> out = model.stage_forward(tape, s, residual, carry, run);
    TensorT<S> diff = sub(tape, patches, out.estimate);
    detail::accumulate_term(tape, loss, diff, /*inpaint_term=*/false);
    residual = diff;  // R_s = P - reconstruction_s
    carry = std::move(out.carry);
  }
  return loss;
}

template <typename S>
LossBreakdownT<S> loss_inpaint(TapeT<S>* tape, InpaintNetT<S>& net,
                               const TensorT<S>& patches,
                               const TensorT<S>& contexts, BnMode bn_mode) {
  R2I_CHECK_ARG(!contexts.empty(), "loss_inpaint: contexts missing");
  LossBreakdownT<S> loss;
  auto out = net.forward(tape, contexts, bn_mode);
  TensorT<S> diff = sub(tape, patches, out.pred);
  detail::accumulate_term(tape, loss, diff, /*inpaint_term=*/true);
  return loss;
}

// Joint objective: the inpainting term plus per-stage terms where each
// stage's pre-nonlinearity prediction is combined with the (pre-TanH)
// inpainting estimate before the output TanH. Stage 1 consumes the
// inpainting residual P - M_I(C), so inpainting gradients flow from every
// stage as well as from the inpainting term itself.
template <typename S>
LossBreakdownT<S> loss_joint(TapeT<S>* tape, ModelT<S>& model,
                             InpaintNetT<S>& net, const TensorT<S>& patches,
                             const TensorT<S>& contexts, const RunOptions& run,
                             double inpaint_weight = 1.0) {
  R2I_CHECK_ARG(model.kind() == ModelKind::kDecoding && model.joint_head(),
                "loss_joint requires a joint-head decoding model");
  R2I_CHECK_ARG(!contexts.empty(), "loss_joint: contexts missing");
  LossBreakdownT<S> loss;
  auto inp = net.forward(tape, contexts, run.bn_mode);
  // Inpainting residual; doubles as the difference for the inpainting term.
  TensorT<S> residual = sub(tape, patches, inp.pred);
  {
    TensorT<S> term = sum_sq(tape, residual);
    loss.inpaint_sum = double(term.data()[0]);
    loss.inpaint_mean = loss.inpaint_sum / double(residual.count());
    loss.has_inpaint = true;
    loss.total_sum += loss.inpaint_sum;
    loss.total_mean += inpaint_weight * loss.inpaint_mean;
    loss.objective =
        scale(tape, term, S(inpaint_weight / double(residual.count())));
  }
  CarryT<S> carry;
  for (int s = 1; s <= model.stages(); ++s) {
    StageResultT<S> out =
        model.stage_forward(tape, s, residual, carry, run, &inp.pred_pre);
    TensorT<S> diff = sub(tape, patches, out.estimate);
    detail::accumulate_term(tape, loss, diff, /*inpaint_term=*/false);
    residual = diff;
    carry = std::move(out.carry);
  }
  loss.has_inpaint = true;
  return loss;
}

}  // namespace r2i

#endif  // R2I_LOSSES_HPP_
