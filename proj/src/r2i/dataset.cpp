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

#include "r2i/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include "r2i/common.hpp"
#include "r2i/inpaint.hpp"

namespace r2i {

PatchDataset PatchDataset::from_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      paths.push_back(entry.path().string());
  }
  if (ec) throw IoError("cannot read dataset directory: " + dir);
  std::sort(paths.begin(), paths.end());
  std::vector<Image> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(load_ppm(p));
  if (images.empty()) throw IoError("dataset is empty: " + dir);
  return from_images(std::move(images));
}

PatchDataset PatchDataset::from_images(std::vector<Image> images) {
  R2I_CHECK_ARG(!images.empty(), "dataset is empty");
  PatchDataset ds;
  ds.images_ = std::move(images);
  ds.index_patches();
  R2I_CHECK_ARG(!ds.positions_.empty(),
                "dataset images are smaller than one 32x32 patch");
  return ds;
}

void PatchDataset::index_patches() {
  for (size_t i = 0; i < images_.size(); ++i) {
    const Image& img = images_[i];
    for (int top = 0; top + kPatchSize <= img.height; top += kPatchSize)
      for (int left = 0; left + kPatchSize <= img.width; left += kPatchSize)
        positions_.push_back(Pos{int(i), top, left});
  }
}

void PatchDataset::fill(PatchBatch& batch, int slot, const Pos& pos,
                        bool with_context) const {
  const Image& img = images_[pos.image];
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kPatchSize; ++y)
      for (int x = 0; x < kPatchSize; ++x)
        batch.patches.at(slot, c, y, x) = img.at(c, pos.top + y, pos.left + x);
  if (!with_context) return;
  const int half = kContextSize - kPatchSize;
  Tensor window =
      image_window(img, pos.top - half, pos.left - half, kContextSize,
                   kContextSize);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kContextSize; ++y)
      for (int x = 0; x < kContextSize; ++x) {
        float v = window.at(0, c, y, x);
        if (y >= half && x >= half) v = 0.f;  // quadrant being predicted
        batch.contexts.at(slot, c, y, x) = v;
      }
}

PatchBatch PatchDataset::sample(int n, Rng rng, bool with_context) const {
  R2I_CHECK_ARG(n >= 1, "sample: batch size must be positive");
  PatchBatch batch;
  batch.patches = Tensor::zeros(Shape(n, 3, kPatchSize, kPatchSize));
  if (with_context)
    batch.contexts = Tensor::zeros(Shape(n, 3, kContextSize, kContextSize));
  for (int i = 0; i < n; ++i) {
    const size_t pick = size_t(rng.next_u64() % positions_.size());
    fill(batch, i, positions_[pick], with_context);
  }
  return batch;
}

PatchBatch PatchDataset::take(size_t offset, int n, bool with_context) const {
  R2I_CHECK_ARG(offset + size_t(n) <= positions_.size(),
                "take: range exceeds dataset");
  PatchBatch batch;
  batch.patches = Tensor::zeros(Shape(n, 3, kPatchSize, kPatchSize));
  if (with_context)
    batch.contexts = Tensor::zeros(Shape(n, 3, kContextSize, kContextSize));
  for (int i = 0; i < n; ++i)
    fill(batch, i, positions_[offset + i], with_context);
  return batch;
}

}  // namespace r2i
