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

#ifndef R2I_DATASET_HPP_
#define R2I_DATASET_HPP_

#include <string>
#include <vector>

#include "r2i/image.hpp"
#include "r2i/rng.hpp"
#include "r2i/tensor.hpp"

namespace r2i {

// Training samples: 32x32 patches, optionally with their 64x64 context
// windows (patch quadrant zeroed, out-of-image area zero-filled).
struct PatchBatch {
  Tensor patches;   // (N,3,32,32) in [-1,1]
  Tensor contexts;  // (N,3,64,64) or empty

  bool has_contexts() const { return !contexts.empty(); }
  int size() const { return patches.shape().n; }
};

// Aligned 32x32 crops over a set of images. Patches are grid-aligned so a
// patch's context window matches what the codec assembles at the same
// position.
class PatchDataset {
 public:
  static PatchDataset from_directory(const std::string& dir);
  static PatchDataset from_images(std::vector<Image> images);

  size_t patch_count() const { return positions_.size(); }

  // Draws n positions (with replacement) from the given stream.
  PatchBatch sample(int n, Rng rng, bool with_context) const;

  // Every aligned patch in index order; used by deterministic evaluations.
  PatchBatch take(size_t offset, int n, bool with_context) const;

 private:
  struct Pos {
    int image;
    int top;
    int left;
  };

  void index_patches();
  void fill(PatchBatch& batch, int slot, const Pos& pos,
            bool with_context) const;

  std::vector<Image> images_;
  std::vector<Pos> positions_;
};

}  // namespace r2i

#endif  // R2I_DATASET_HPP_
