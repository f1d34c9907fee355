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

#include "r2i/codec.hpp"

#include <cstring>

namespace r2i {

namespace {

constexpr int kPatch = 32;

Tensor add_plain(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.count(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Tensor sub_plain(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.count(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

uint8_t model_kind_tag(ModelKind k) { return uint8_t(k); }

}  // namespace

std::vector<uint8_t> serialize_header(const BitstreamHeader& h) {
  std::vector<uint8_t> out(kHeaderBytes);
  out[0] = 'R';
  out[1] = '2';
  out[2] = 'I';
  out[3] = 'C';
  out[4] = h.version;
  out[5] = uint8_t(h.width & 0xff);
  out[6] = uint8_t(h.width >> 8);
  out[7] = uint8_t(h.height & 0xff);
  out[8] = uint8_t(h.height >> 8);
  out[9] = h.patch_size;
  out[10] = h.stages;
  out[11] = h.kind_tag;
  std::memcpy(out.data() + 12, h.digest.data(), 8);
  out[20] = h.flags;
  return out;
}

BitstreamHeader parse_header(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes)
    throw CorruptError("bitstream shorter than its header");
  if (std::memcmp(bytes.data(), "R2IC", 4) != 0)
    throw CorruptError("bad bitstream magic");
  BitstreamHeader h;
  h.version = bytes[4];
  if (h.version != 1)
    throw CorruptError("unknown bitstream version " +
                       std::to_string(int(h.version)));
  h.width = uint16_t(bytes[5] | (uint16_t(bytes[6]) << 8));
  h.height = uint16_t(bytes[7] | (uint16_t(bytes[8]) << 8));
  h.patch_size = bytes[9];
  h.stages = bytes[10];
  h.kind_tag = bytes[11];
  std::memcpy(h.digest.data(), bytes.data() + 12, 8);
  h.flags = bytes[20];
  if (h.patch_size != kPatch)
    throw CorruptError("unsupported patch size in stream");
  if (h.width == 0 || h.height == 0 || h.stages == 0)
    throw CorruptError("degenerate bitstream header");
  if (h.kind_tag > 3) throw CorruptError("unknown connection kind tag");
  if (h.inpainting_coupled() && h.stages < 2)
    throw CorruptError("inpainting-coupled stream needs at least 2 stages");
  return h;
}

std::vector<uint8_t> pack_bits(const Tensor& code) {
  const int64_t bits = code.count();
  std::vector<uint8_t> out((size_t(bits) + 7) / 8, 0);
  for (int64_t i = 0; i < bits; ++i) {
    const float v = code.data()[i];
    R2I_CHECK_ARG(v == 1.f || v == -1.f, "pack_bits: code values must be +-1");
    if (v == 1.f) out[size_t(i) / 8] |= uint8_t(0x80u >> (i % 8));
  }
  return out;
}

Tensor unpack_bits(const uint8_t* bytes, size_t n_bytes, Shape shape) {
  R2I_CHECK_ARG(n_bytes * 8 >= size_t(shape.count()),
                "unpack_bits: not enough bytes");
  Tensor code = Tensor::zeros(shape);
  for (int64_t i = 0; i < shape.count(); ++i) {
    const bool bit = (bytes[size_t(i) / 8] >> (7 - (i % 8))) & 1;
    code.data()[i] = bit ? 1.f : -1.f;
  }
  return code;
}

Image pad_image(const Image& img) {
  R2I_CHECK_ARG(img.width >= 1 && img.height >= 1, "pad_image: empty image");
  const int pw = (img.width + kPatch - 1) / kPatch * kPatch;
  const int ph = (img.height + kPatch - 1) / kPatch * kPatch;
  if (pw == img.width && ph == img.height) return img;
  Image out = Image::filled(pw, ph);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ph; ++y) {
      const int sy = y < img.height ? y : img.height - 1;
      for (int x = 0; x < pw; ++x) {
        const int sx = x < img.width ? x : img.width - 1;
        out.at(c, y, x) = img.at(c, sy, sx);
      }
    }
  return out;
}

Tensor assemble_context(const Image& canvas, int patch_row, int patch_col) {
  const int top = patch_row * kPatch - kPatch;
  const int left = patch_col * kPatch - kPatch;
  Tensor ctx = image_window(canvas, top, left, kContextSize, kContextSize);
  for (int c = 0; c < 3; ++c)
    for (int y = kPatch; y < kContextSize; ++y)
      for (int x = kPatch; x < kContextSize; ++x)
        ctx.at(0, c, y, x) = 0.f;
  return ctx;
}

namespace {

struct Layout {
  BitstreamHeader header;
  int patches_x, patches_y, patches;

  // Byte offset of a patch's code for a stage, relative to payload start.
  size_t code_offset(int stage, int patch) const {
    if (!header.inpainting_coupled())
      return header.payload_bytes(stage - 1) +
             size_t(patch) * kStageCodeBytes;
    if (stage <= 2)
      return size_t(patch) * 2 * kStageCodeBytes +
             size_t(stage - 1) * kStageCodeBytes;
    return header.payload_bytes(stage - 2) + size_t(patch) * kStageCodeBytes;
  }
};

Shape code_shape() { return Shape(1, 8, kPatch / 8, kPatch / 8); }

void check_model_pairing(const Model& model, const InpaintNet* net) {
  if (model.joint_head()) {
    R2I_CHECK_ARG(net != nullptr,
                  "inpainting-coupled model needs the inpainting network");
  } else {
    R2I_CHECK_ARG(net == nullptr,
                  "inpainting network given to an uncoupled model");
  }
}

}  // namespace

std::vector<uint8_t> encode_image(Model& model, InpaintNet* net,
                                  const Image& img, int stages_out,
                                  const std::array<uint8_t, 8>& digest,
                                  CodecTrace* trace) {
  check_model_pairing(model, net);
  const bool coupled = model.joint_head();
  R2I_CHECK_ARG(stages_out >= 1, "encode: need at least one stage");
  R2I_CHECK_ARG(!coupled || stages_out >= 2,
                "encode: inpainting-coupled streams need at least 2 stages");
  R2I_CHECK_ARG(stages_out <= model.stages(),
                "encode: more stages requested than the model has");
  R2I_CHECK_ARG(img.width <= 0xffff && img.height <= 0xffff,
                "encode: image dimensions exceed the header field");

  BitstreamHeader h;
  h.width = uint16_t(img.width);
  h.height = uint16_t(img.height);
  h.stages = uint8_t(stages_out);
  h.kind_tag = model_kind_tag(model.kind());
  h.digest = digest;
  h.flags = coupled ? 1 : 0;

  const Image padded = pad_image(img);
  Layout layout{h, h.patches_x(), h.patches_y(), h.patch_count()};
  std::vector<uint8_t> payload(h.payload_bytes(h.units()), 0);

  if (trace) {
    trace->stage_recons.assign(
        size_t(stages_out), Image::filled(padded.width, padded.height, 0.f));
    trace->contexts.clear();
  }

  const RunOptions run = RunOptions::infer();

  auto write_code = [&](int stage, int patch, const Tensor& code) {
    const std::vector<uint8_t> bytes = pack_bits(code);
    std::memcpy(payload.data() + layout.code_offset(stage, patch),
                bytes.data(), bytes.size());
  };

  if (!coupled) {
    // Patches are independent; each runs all stages locally.
    for (int pr = 0; pr < layout.patches_y; ++pr) {
      for (int pc = 0; pc < layout.patches_x; ++pc) {
        const int patch = pr * layout.patches_x + pc;
        const Tensor target =
            image_window(padded, pr * kPatch, pc * kPatch, kPatch, kPatch);
        Tensor residual = target;
        Tensor recon_sum;  // residual-chain accumulator
        CarryT<float> carry;
        for (int s = 1; s <= stages_out; ++s) {
          StageResultT<float> out =
              model.stage_forward(nullptr, s, residual, carry, run);
          write_code(s, patch, out.code);
          Tensor recon;
          if (model.kind() == ModelKind::kResidual) {
            recon_sum = recon_sum.empty() ? out.estimate
                                          : add_plain(recon_sum, out.estimate);
            recon = recon_sum;
            residual = sub_plain(residual, out.estimate);
          } else {
            recon = out.estimate;
            residual = sub_plain(target, out.estimate);
          }
          carry = std::move(out.carry);
          if (trace)
            blit_tensor(trace->stage_recons[size_t(s - 1)], recon,
                        pr * kPatch, pc * kPatch);
        }
      }
    }
    std::vector<uint8_t> out = serialize_header(h);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
  }

  // Inpainting-coupled: stage-2 reconstructions double as the context
  // source for later patches, so the first two stages run in raster order.
  Image canvas = Image::filled(padded.width, padded.height, 0.f);
  std::vector<Tensor> saved_residual(size_t(layout.patches));
  std::vector<Tensor> saved_pred_pre(size_t(layout.patches));
  std::vector<CarryT<float>> saved_carry(size_t(layout.patches));

  for (int pr = 0; pr < layout.patches_y; ++pr) {
    for (int pc = 0; pc < layout.patches_x; ++pc) {
      const int patch = pr * layout.patches_x + pc;
      Tensor ctx = assemble_context(canvas, pr, pc);
      if (trace) trace->contexts.push_back(ctx);
      auto inp = net->forward(nullptr, ctx, BnMode::kInfer);
      const Tensor target =
          image_window(padded, pr * kPatch, pc * kPatch, kPatch, kPatch);
      Tensor residual = sub_plain(target, inp.pred);
      CarryT<float> carry;
      Tensor recon;
      for (int s = 1; s <= 2; ++s) {
        StageResultT<float> out =
            model.stage_forward(nullptr, s, residual, carry, run, &inp.pred_pre);
        write_code(s, patch, out.code);
        recon = out.estimate;
        residual = sub_plain(target, out.estimate);
        carry = std::move(out.carry);
        if (trace)
          blit_tensor(trace->stage_recons[size_t(s - 1)], recon, pr * kPatch,
                      pc * kPatch);
      }
      blit_tensor(canvas, recon, pr * kPatch, pc * kPatch);
      saved_residual[size_t(patch)] = residual;
      saved_pred_pre[size_t(patch)] = inp.pred_pre;
      saved_carry[size_t(patch)] = std::move(carry);
    }
  }

  // Later stages reuse the stage-2 inpainting estimate; no inter-patch
  // dependence remains.
  for (int pr = 0; pr < layout.patches_y; ++pr) {
    for (int pc = 0; pc < layout.patches_x; ++pc) {
      const int patch = pr * layout.patches_x + pc;
      const Tensor target =
          image_window(padded, pr * kPatch, pc * kPatch, kPatch, kPatch);
      Tensor residual = saved_residual[size_t(patch)];
      CarryT<float> carry = std::move(saved_carry[size_t(patch)]);
      for (int s = 3; s <= stages_out; ++s) {
        StageResultT<float> out = model.stage_forward(
            nullptr, s, residual, carry, run, &saved_pred_pre[size_t(patch)]);
        write_code(s, patch, out.code);
        residual = sub_plain(target, out.estimate);
        carry = std::move(out.carry);
        if (trace)
          blit_tensor(trace->stage_recons[size_t(s - 1)], out.estimate,
                      pr * kPatch, pc * kPatch);
      }
    }
  }

  std::vector<uint8_t> out = serialize_header(h);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Image decode_image(Model& model, InpaintNet* net,
                   const std::vector<uint8_t>& bytes, int up_to_stage,
                   const std::array<uint8_t, 8>& expected_digest,
                   size_t* consumed, CodecTrace* trace) {
  check_model_pairing(model, net);
  const BitstreamHeader h = parse_header(bytes);
  if (h.digest != expected_digest)
    throw IntegrityError("bitstream was produced by different weights");
  const bool coupled = h.inpainting_coupled();
  R2I_CHECK_ARG(coupled == model.joint_head(),
                "stream/model inpainting coupling mismatch");
  R2I_CHECK_ARG(h.kind_tag == model_kind_tag(model.kind()),
                "stream/model connection kind mismatch");
  R2I_CHECK_ARG(up_to_stage >= 1 && up_to_stage <= int(h.stages),
                "decode: stage out of range for this stream");
  R2I_CHECK_ARG(!coupled || up_to_stage >= 2,
                "decode: inpainting-coupled streams decode from stage 2");
  R2I_CHECK_ARG(int(h.stages) <= model.stages(),
                "decode: stream has more stages than the model");

  const int units_needed = coupled ? up_to_stage - 1 : up_to_stage;
  const size_t needed = kHeaderBytes + h.payload_bytes(units_needed);
  if (bytes.size() < needed)
    throw CorruptError("bitstream truncated: need " + std::to_string(needed) +
                       " bytes, have " + std::to_string(bytes.size()));
  if (consumed) *consumed = needed;

  Layout layout{h, h.patches_x(), h.patches_y(), h.patch_count()};
  const uint8_t* payload = bytes.data() + kHeaderBytes;
  auto read_code = [&](int stage, int patch) {
    return unpack_bits(payload + layout.code_offset(stage, patch),
                       kStageCodeBytes, code_shape());
  };

  const int pw = layout.patches_x * kPatch, ph = layout.patches_y * kPatch;
  Image out_canvas = Image::filled(pw, ph, 0.f);
  if (trace) trace->contexts.clear();

  if (!coupled) {
    for (int pr = 0; pr < layout.patches_y; ++pr) {
      for (int pc = 0; pc < layout.patches_x; ++pc) {
        const int patch = pr * layout.patches_x + pc;
        CarryT<float> carry;
        Tensor recon_sum;
        Tensor recon;
        for (int s = 1; s <= up_to_stage; ++s) {
          StageResultT<float> out =
              model.stage_decode(s, read_code(s, patch), carry);
          if (model.kind() == ModelKind::kResidual) {
            recon_sum = recon_sum.empty() ? out.estimate
                                          : add_plain(recon_sum, out.estimate);
            recon = recon_sum;
          } else {
            recon = out.estimate;
          }
          carry = std::move(out.carry);
        }
        blit_tensor(out_canvas, recon, pr * kPatch, pc * kPatch);
      }
    }
  } else {
    // Raster pass over stages 1-2 rebuilds the encoder's context canvas.
    Image canvas = Image::filled(pw, ph, 0.f);
    std::vector<Tensor> saved_pred_pre(size_t(layout.patches));
    std::vector<CarryT<float>> saved_carry(size_t(layout.patches));
    for (int pr = 0; pr < layout.patches_y; ++pr) {
      for (int pc = 0; pc < layout.patches_x; ++pc) {
        const int patch = pr * layout.patches_x + pc;
        Tensor ctx = assemble_context(canvas, pr, pc);
        if (trace) trace->contexts.push_back(ctx);
        auto inp = net->forward(nullptr, ctx, BnMode::kInfer);
        CarryT<float> carry;
        Tensor recon;
        for (int s = 1; s <= 2; ++s) {
          StageResultT<float> out =
              model.stage_decode(s, read_code(s, patch), carry, &inp.pred_pre);
          recon = out.estimate;
          carry = std::move(out.carry);
        }
        blit_tensor(canvas, recon, pr * kPatch, pc * kPatch);
        saved_pred_pre[size_t(patch)] = inp.pred_pre;
        saved_carry[size_t(patch)] = std::move(carry);
      }
    }
    for (int pr = 0; pr < layout.patches_y; ++pr) {
      for (int pc = 0; pc < layout.patches_x; ++pc) {
        const int patch = pr * layout.patches_x + pc;
        Tensor recon =
            image_window(canvas, pr * kPatch, pc * kPatch, kPatch, kPatch);
        CarryT<float> carry = std::move(saved_carry[size_t(patch)]);
        for (int s = 3; s <= up_to_stage; ++s) {
          StageResultT<float> out = model.stage_decode(
              s, read_code(s, patch), carry, &saved_pred_pre[size_t(patch)]);
          recon = out.estimate;
          carry = std::move(out.carry);
        }
        blit_tensor(out_canvas, recon, pr * kPatch, pc * kPatch);
      }
    }
  }

  // Crop the replicate padding back off.
  Image out = Image::filled(h.width, h.height);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h.height; ++y)
      for (int x = 0; x < h.width; ++x) out.at(c, y, x) = out_canvas.at(c, y, x);
  return out;
}

}  // namespace r2i
