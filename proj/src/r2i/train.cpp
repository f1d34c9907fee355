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

#include "r2i/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "r2i/gemm.hpp"

namespace r2i {

std::vector<int64_t> lr_drop_iterations(LrProfile profile,
                                        int64_t total_iterations) {
  // Fractions of the run length; exact at the reference lengths.
  struct Frac {
    int64_t num, den;
  };
  static const std::vector<Frac> r2i = {{1, 2}, {3, 4}};           // 30k/45k of 60k
  static const std::vector<Frac> ir2i = {{3, 11}, {13, 22}, {9, 11}};  // of 110k
  const auto& fracs = profile == LrProfile::kR2i ? r2i : ir2i;
  std::vector<int64_t> drops;
  for (const auto& f : fracs)
    drops.push_back(total_iterations * f.num / f.den);
  return drops;
}

double lr_schedule(LrProfile profile, int64_t iteration,
                   int64_t total_iterations, double base_lr,
                   double drop_factor) {
  double lr = base_lr;
  for (int64_t drop : lr_drop_iterations(profile, total_iterations))
    if (iteration >= drop) lr /= drop_factor;
  return lr;
}

void TrainConfig::validate() const {
  R2I_CHECK_ARG(stages >= 1, "train: stages must be >= 1");
  R2I_CHECK_ARG(iterations >= 1, "train: iterations must be >= 1");
  R2I_CHECK_ARG(batch_size >= 1, "train: batch size must be >= 1");
  R2I_CHECK_ARG(base_lr > 0, "train: base learning rate must be positive");
  const auto drops = effective_drops();
  for (size_t i = 0; i < drops.size(); ++i) {
    R2I_CHECK_ARG(drops[i] < iterations,
                  "train: lr drop beyond the last iteration");
    if (i) R2I_CHECK_ARG(drops[i] > drops[i - 1],
                         "train: lr drops must be strictly increasing");
  }
}

TrainConfig TrainConfig::from_config(Config& cfg) {
  TrainConfig tc;
  const std::string kind = cfg.get_string("model.kind", "decoding");
  if (kind == "residual") tc.kind = WeightKind::kResidual;
  else if (kind == "prediction") tc.kind = WeightKind::kPrediction;
  else if (kind == "full") tc.kind = WeightKind::kFull;
  else if (kind == "decoding") tc.kind = WeightKind::kDecoding;
  else if (kind == "ir2i") tc.kind = WeightKind::kIr2i;
  else if (kind == "inpaint") tc.kind = WeightKind::kInpaint;
  else if (kind == "vanilla") tc.kind = WeightKind::kVanilla;
  else throw ArgError("model.kind must be one of residual, prediction, full, "
                      "decoding, ir2i, inpaint, vanilla; got '" + kind + "'");
  tc.stages = int(cfg.get_int("model.stages", tc.stages));
  tc.iterations = cfg.get_int("train.iterations", tc.iterations);
  tc.batch_size = int(cfg.get_int("train.batch_size", tc.batch_size));
  tc.base_lr = cfg.get_double("train.base_lr", tc.base_lr);
  tc.lr_drops = cfg.get_int_list("train.lr_drop_iterations", tc.lr_drops);
  tc.lr_drop_factor = cfg.get_double("train.lr_drop_factor", tc.lr_drop_factor);
  tc.seed = uint64_t(cfg.get_int("train.seed", int64_t(tc.seed)));
  tc.dataset_dir = cfg.get_string("train.dataset", tc.dataset_dir);
  tc.out_dir = cfg.get_string("train.out_dir", tc.out_dir);
  tc.checkpoint_every = cfg.get_int("train.checkpoint_every", tc.checkpoint_every);
  tc.inpaint_weight = cfg.get_double("train.inpaint_weight", tc.inpaint_weight);
  tc.threads = int(cfg.get_int("train.threads", tc.threads));
  tc.deterministic = cfg.get_bool("train.deterministic", tc.deterministic);
  cfg.reject_unknown_keys();
  if (tc.dataset_dir.empty())
    throw ArgError("train.dataset is required (directory of .ppm images)");
  tc.validate();
  return tc;
}

std::string TrainConfig::dump_defaults() {
  TrainConfig d;
  std::string out;
  out += "model.kind = decoding         # residual|prediction|full|decoding|ir2i|inpaint|vanilla\n";
  out += "model.stages = " + std::to_string(d.stages) + "\n";
  out += "train.iterations = " + std::to_string(d.iterations) + "\n";
  out += "train.batch_size = " + std::to_string(d.batch_size) + "\n";
  out += "train.base_lr = 0.001\n";
  out += "train.lr_drop_iterations =    # empty: profile-scaled defaults\n";
  out += "train.lr_drop_factor = 10\n";
  out += "train.seed = " + std::to_string(d.seed) + "\n";
  out += "train.dataset =               # directory of .ppm images (required)\n";
  out += "train.out_dir = .\n";
  out += "train.checkpoint_every = " + std::to_string(d.checkpoint_every) + "\n";
  out += "train.inpaint_weight = 1\n";
  out += "train.threads = 1\n";
  out += "train.deterministic = true\n";
  return out;
}

namespace {

struct Trainee {
  std::unique_ptr<Model> model;
  std::unique_ptr<InpaintNet> net;
  int loss_stages = 0;

  ParamSet& params() {
    // Joint runs merge both parameter sets into the model's for the
    // optimizer; see make_trainee.
    return model ? model->params() : net->params();
  }
};

Trainee make_trainee(const TrainConfig& cfg) {
  Trainee t;
  switch (cfg.kind) {
    case WeightKind::kResidual:
      t.model = std::make_unique<Model>(
          Model::build(ModelKind::kResidual, cfg.stages, cfg.seed));
      t.loss_stages = cfg.stages;
      break;
    case WeightKind::kPrediction:
      t.model = std::make_unique<Model>(
          Model::build(ModelKind::kPrediction, cfg.stages, cfg.seed));
      t.loss_stages = cfg.stages;
      break;
    case WeightKind::kFull:
      t.model = std::make_unique<Model>(
          Model::build(ModelKind::kFull, cfg.stages, cfg.seed));
      t.loss_stages = cfg.stages;
      break;
    case WeightKind::kDecoding:
      t.model = std::make_unique<Model>(
          Model::build(ModelKind::kDecoding, cfg.stages, cfg.seed));
      t.loss_stages = cfg.stages;
      break;
    case WeightKind::kIr2i:
      t.model = std::make_unique<Model>(Model::build(
          ModelKind::kDecoding, cfg.stages, cfg.seed, /*joint_head=*/true));
      t.net = std::make_unique<InpaintNet>(
          InpaintNet::build_multiscale(Rng(cfg.seed).stream("inpaint-init").next_u64()));
      t.loss_stages = cfg.stages;
      break;
    case WeightKind::kInpaint:
      t.net = std::make_unique<InpaintNet>(InpaintNet::build_multiscale(cfg.seed));
      break;
    case WeightKind::kVanilla:
      t.net = std::make_unique<InpaintNet>(InpaintNet::build_vanilla(cfg.seed));
      break;
  }
  return t;
}

ParamSet snapshot_params(const TrainConfig& cfg, Trainee& t) {
  ParamSet out;
  auto copy_all = [&out](const ParamSet& src) {
    for (const auto& name : src.names()) out.create(name, src.at(name));
  };
  if (t.model) copy_all(t.model->params());
  if (t.net) copy_all(t.net->params());
  (void)cfg;
  return out;
}

void write_checkpoint(const TrainConfig& cfg, Trainee& t,
                      const std::string& path) {
  WeightFile file;
  file.kind = cfg.kind;
  file.stages = uint8_t(t.model ? cfg.stages : 0);
  file.seed = cfg.seed;
  file.params = snapshot_params(cfg, t);
  save_weights(path, file);
}

}  // namespace

TrainResult train(const TrainConfig& config, const PatchDataset& dataset,
                  const std::function<void(const TrainLogRow&)>& on_row) {
  config.validate();
  set_blas_threads(config.deterministic ? 1 : config.threads);

  Trainee t = make_trainee(config);
  const bool needs_context = t.net != nullptr;

  // All trainable tensors under one optimizer.
  ParamSet opt_params = snapshot_params(config, t);
  AdamState adam;

  const Rng root(config.seed);
  const auto drops = config.effective_drops();

  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  TrainResult result;
  result.loss_csv_path = (fs::path(config.out_dir) / "loss.csv").string();
  std::ofstream csv(result.loss_csv_path);
  if (!csv) throw IoError("cannot write loss log: " + result.loss_csv_path);
  csv << "iteration,lr";
  csv << ",total_loss";
  for (int s = 1; s <= t.loss_stages; ++s) csv << ",stage_" << s;
  if (needs_context) csv << ",inpaint_loss";
  csv << "\n";
  csv.precision(10);

  for (int64_t iter = 0; iter < config.iterations; ++iter) {
    double lr = config.base_lr;
    for (int64_t d : drops)
      if (iter >= d) lr /= config.lr_drop_factor;

    PatchBatch batch =
        dataset.sample(config.batch_size, root.stream("data").stream(uint64_t(iter)),
                       needs_context);
    Rng bin_rng = root.stream("binarizer").stream(uint64_t(iter));

    Tape tape;
    LossBreakdown loss;
    RunOptions run = RunOptions::train(&bin_rng);
    switch (config.kind) {
      case WeightKind::kResidual:
        loss = loss_residual(&tape, *t.model, batch.patches, run);
        break;
      case WeightKind::kPrediction:
      case WeightKind::kFull:
      case WeightKind::kDecoding:
        loss = loss_r2i(&tape, *t.model, batch.patches, run);
        break;
      case WeightKind::kIr2i:
        loss = loss_joint(&tape, *t.model, *t.net, batch.patches,
                          batch.contexts, run, config.inpaint_weight);
        break;
      case WeightKind::kInpaint:
      case WeightKind::kVanilla:
        loss = loss_inpaint(&tape, *t.net, batch.patches, batch.contexts,
                            BnMode::kTrain);
        break;
    }

    if (!std::isfinite(loss.total_mean))
      throw NumericError("training diverged: non-finite loss at iteration " +
                         std::to_string(iter));

    opt_params.zero_grads();
    tape.backward(loss.objective);
    adam.step(opt_params, lr);

    TrainLogRow row;
    row.iteration = iter;
    row.lr = lr;
    row.total = loss.total_mean;
    row.stages = loss.stage_mean;
    row.inpaint = loss.inpaint_mean;
    row.has_inpaint = loss.has_inpaint;
    csv << iter << "," << lr << "," << row.total;
    for (double v : row.stages) csv << "," << v;
    if (needs_context) csv << "," << row.inpaint;
    csv << "\n";
    result.history.push_back(row);
    if (on_row) on_row(row);

    if (config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0 &&
        iter + 1 < config.iterations) {
      write_checkpoint(config, t,
                       (fs::path(config.out_dir) /
                        ("model_iter_" + std::to_string(iter + 1) + ".r2iw"))
                           .string());
    }
  }

  result.final_weights_path =
      (fs::path(config.out_dir) / "model_final.r2iw").string();
  write_checkpoint(config, t, result.final_weights_path);
  return result;
}

TrainResult train(const TrainConfig& config) {
  R2I_CHECK_ARG(!config.dataset_dir.empty(), "train: dataset path missing");
  PatchDataset dataset = PatchDataset::from_directory(config.dataset_dir);
  return train(config, dataset);
}

}  // namespace r2i
