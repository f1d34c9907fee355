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

#ifndef R2I_TRAIN_HPP_
#define R2I_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "r2i/config.hpp"
#include "r2i/dataset.hpp"
#include "r2i/losses.hpp"
#include "r2i/weights.hpp"

namespace r2i {

// Step-decay profiles. The reference schedules drop the rate by 10x after
// 30k/45k of 60k iterations (stage models) and after 30k/65k/90k of 110k
// (joint model); shorter runs scale the breakpoints proportionally.
enum class LrProfile { kR2i, kIr2i };

double lr_schedule(LrProfile profile, int64_t iteration,
                   int64_t total_iterations, double base_lr = 1e-3,
                   double drop_factor = 10.0);

// Breakpoints for a given run length (exact integer scaling).
std::vector<int64_t> lr_drop_iterations(LrProfile profile,
                                        int64_t total_iterations);

struct TrainConfig {
  WeightKind kind = WeightKind::kDecoding;
  int stages = 8;
  int64_t iterations = 60000;
  int batch_size = 32;
  double base_lr = 1e-3;
  std::vector<int64_t> lr_drops;  // empty: profile defaults for `iterations`
  double lr_drop_factor = 10.0;
  uint64_t seed = 1;
  std::string dataset_dir;
  std::string out_dir = ".";
  int64_t checkpoint_every = 10000;
  double inpaint_weight = 1.0;
  int threads = 1;
  bool deterministic = true;

  static TrainConfig from_config(Config& cfg);
  static std::string dump_defaults();

  LrProfile profile() const {
    return kind == WeightKind::kIr2i ? LrProfile::kIr2i : LrProfile::kR2i;
  }
  std::vector<int64_t> effective_drops() const {
    return lr_drops.empty() ? lr_drop_iterations(profile(), iterations)
                            : lr_drops;
  }
  void validate() const;
};

struct TrainLogRow {
  int64_t iteration = 0;
  double lr = 0;
  double total = 0;
  std::vector<double> stages;
  double inpaint = 0;
  bool has_inpaint = false;
};

struct TrainResult {
  std::vector<TrainLogRow> history;
  std::string final_weights_path;
  std::string loss_csv_path;
};

// Runs the configured optimization on the dataset, writing checkpoints and
// the per-iteration loss log. Aborts with NumericError if the loss stops
// being finite. The optional callback sees every log row as it is produced.
TrainResult train(const TrainConfig& config, const PatchDataset& dataset,
                  const std::function<void(const TrainLogRow&)>& on_row = {});

// Convenience: loads the dataset from config.dataset_dir.
TrainResult train(const TrainConfig& config);

}  // namespace r2i

#endif  // R2I_TRAIN_HPP_
