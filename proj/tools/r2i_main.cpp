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

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "r2i/codec.hpp"
#include "r2i/config.hpp"
#include "r2i/gemm.hpp"
#include "r2i/metrics.hpp"
#include "r2i/model_io.hpp"
#include "r2i/train.hpp"

namespace {

// Exit codes: 0 ok, 2 usage/config, 3 integrity, 4 corrupt data.
constexpr int kExitUsage = 2;
constexpr int kExitIntegrity = 3;
constexpr int kExitCorrupt = 4;

void print_kv(const std::string& k, const std::string& v) {
  std::cout << k << " = " << v << "\n";
}

std::vector<r2i::Image> load_image_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm")
      paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw r2i::IoError("no .ppm images in " + dir);
  std::vector<r2i::Image> images;
  for (const auto& p : paths) images.push_back(r2i::load_ppm(p));
  return images;
}

int cmd_train(const std::string& config_path, bool dump_defaults,
              int64_t seed_override, int deterministic_override,
              int threads_override) {
  if (dump_defaults) {
    std::cout << r2i::TrainConfig::dump_defaults();
    return 0;
  }
  if (config_path.empty())
    throw r2i::ArgError("train: --config is required (or --dump-defaults)");
  r2i::Config cfg = r2i::Config::parse_file(config_path);
  r2i::TrainConfig tc = r2i::TrainConfig::from_config(cfg);
  if (seed_override >= 0) tc.seed = uint64_t(seed_override);
  if (deterministic_override >= 0) tc.deterministic = deterministic_override != 0;
  if (threads_override > 0) tc.threads = threads_override;

  print_kv("model.kind", r2i::weight_kind_name(tc.kind));
  print_kv("model.stages", std::to_string(tc.stages));
  print_kv("train.iterations", std::to_string(tc.iterations));
  print_kv("train.batch_size", std::to_string(tc.batch_size));
  print_kv("train.base_lr", std::to_string(tc.base_lr));
  {
    std::string drops;
    for (int64_t d : tc.effective_drops())
      drops += (drops.empty() ? "" : ",") + std::to_string(d);
    print_kv("train.lr_drop_iterations", drops);
  }
  print_kv("train.seed", std::to_string(tc.seed));
  print_kv("train.dataset", tc.dataset_dir);
  print_kv("train.out_dir", tc.out_dir);
  print_kv("train.deterministic", tc.deterministic ? "true" : "false");

  int64_t next_report = 0;
  r2i::TrainResult result =
      r2i::train(tc, r2i::PatchDataset::from_directory(tc.dataset_dir),
                 [&](const r2i::TrainLogRow& row) {
                   if (row.iteration >= next_report) {
                     std::cout << "iter " << row.iteration << " lr " << row.lr
                               << " loss " << row.total << "\n";
                     next_report = row.iteration + std::max<int64_t>(
                                                       1, tc.iterations / 20);
                   }
                 });
  std::cout << "weights: " << result.final_weights_path << "\n";
  std::cout << "loss log: " << result.loss_csv_path << "\n";
  return 0;
}

int cmd_encode(const std::string& model_path, const std::string& image_path,
               int stages, const std::string& out_path, int threads) {
  r2i::set_blas_threads(threads);
  r2i::LoadedModel lm = r2i::load_model(model_path);
  if (!lm.model) throw r2i::ArgError("encode: weight file is not a codec model");
  const r2i::Image img = r2i::load_ppm(image_path);
  if (stages <= 0) stages = lm.file.stages;

  print_kv("model", model_path);
  print_kv("model.kind", r2i::weight_kind_name(lm.file.kind));
  print_kv("input", image_path);
  print_kv("stages", std::to_string(stages));
  print_kv("output", out_path);

  const std::vector<uint8_t> stream =
      r2i::encode_image(*lm.model, lm.net.get(), img, stages, lm.digest);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw r2i::IoError("cannot write stream: " + out_path);
  out.write(reinterpret_cast<const char*>(stream.data()),
            std::streamsize(stream.size()));
  if (!out) throw r2i::IoError("stream write failed: " + out_path);
  const r2i::BitstreamHeader h = r2i::parse_header(stream);
  const double bpp = double(h.payload_bytes(h.units())) * 8.0 /
                     (double(h.patches_x()) * h.patches_y() * 32 * 32);
  std::cout << "bytes: " << stream.size() << " (header " << r2i::kHeaderBytes
            << " + payload " << stream.size() - r2i::kHeaderBytes << "), "
            << bpp << " bpp\n";
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& stream_path,
               int stage, const std::string& out_path, int threads) {
  r2i::set_blas_threads(threads);
  r2i::LoadedModel lm = r2i::load_model(model_path);
  if (!lm.model) throw r2i::ArgError("decode: weight file is not a codec model");
  std::ifstream in(stream_path, std::ios::binary);
  if (!in) throw r2i::IoError("cannot open stream: " + stream_path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

  print_kv("model", model_path);
  print_kv("stream", stream_path);
  print_kv("output", out_path);

  if (stage <= 0) stage = r2i::parse_header(bytes).stages;
  size_t consumed = 0;
  const r2i::Image img = r2i::decode_image(*lm.model, lm.net.get(), bytes,
                                           stage, lm.digest, &consumed);
  r2i::save_ppm(out_path, img);
  std::cout << "decoded stage " << stage << " from " << consumed
            << " of " << bytes.size() << " bytes\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& image_dir,
             const std::string& metric_name, int stages,
             const std::string& out_csv, const std::string& baseline_csv,
             const std::string& report_path, int threads) {
  r2i::set_blas_threads(threads);
  r2i::LoadedModel lm = r2i::load_model(model_path);
  if (!lm.model) throw r2i::ArgError("eval: weight file is not a codec model");
  const std::vector<r2i::Image> images = load_image_dir(image_dir);
  r2i::Metric metric;
  if (metric_name == "msssim") metric = r2i::Metric::kMsSsim;
  else if (metric_name == "ssim") metric = r2i::Metric::kSsim;
  else throw r2i::ArgError("eval: --metric must be msssim or ssim");
  if (stages <= 0) stages = lm.file.stages;

  print_kv("model", model_path);
  print_kv("images", image_dir);
  print_kv("metric", metric_name);
  print_kv("stages", std::to_string(stages));

  const r2i::RDCurve curve =
      r2i::rd_sweep(*lm.model, lm.net.get(), images, stages, lm.digest, metric);
  r2i::write_rd_csv(out_csv, curve);
  std::cout << "rd curve: " << out_csv << "\n";

  std::string report;
  for (const auto& p : curve.points) {
    report += "bpp " + std::to_string(p.bpp) + "  " + metric_name + " " +
              std::to_string(p.distortion) + "  (" +
              std::to_string(r2i::ms_ssim_db(p.distortion)) + " dB)\n";
  }
  if (!baseline_csv.empty()) {
    r2i::RDCurve baseline = r2i::read_rd_csv(baseline_csv);
    baseline.metric = metric;
    const double savings = r2i::bd_rate_savings(baseline, curve);
    report += "bd_rate_savings_percent = " + std::to_string(savings) +
              "  (positive: fewer bits than baseline)\n";
    std::cout << "BD-rate savings vs baseline: " << savings << "%\n";
  }
  if (!report_path.empty()) {
    std::ofstream rep(report_path);
    if (!rep) throw r2i::IoError("cannot write report: " + report_path);
    rep << report;
  }
  std::cout << report;
  return 0;
}

int cmd_inpaint(const std::string& net_path, const std::string& image_path,
                const std::string& out_path, int threads) {
  r2i::set_blas_threads(threads);
  r2i::LoadedModel lm = r2i::load_model(net_path);
  if (!lm.net) throw r2i::ArgError("inpaint: weight file has no inpainting network");
  const r2i::Image img = r2i::load_ppm(image_path);

  print_kv("net", net_path);
  print_kv("input", image_path);
  print_kv("output", out_path);

  const double mean_ssim = r2i::inpainting_eval(*lm.net, {img});

  // Side by side: original | per-patch predictions.
  r2i::Image side = r2i::Image::filled(img.width * 2, img.height);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        side.at(c, y, x) = img.at(c, y, x);
        side.at(c, y, img.width + x) = img.at(c, y, x);
      }
  const int py = img.height / 32, px = img.width / 32;
  for (int pr = 0; pr < py; ++pr)
    for (int pc = 0; pc < px; ++pc) {
      r2i::Tensor ctx = r2i::Tensor::zeros(r2i::Shape(1, 3, 64, 64));
      r2i::Tensor window =
          r2i::image_window(img, pr * 32 - 32, pc * 32 - 32, 64, 64);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x)
            ctx.at(0, c, y, x) =
                (y >= 32 && x >= 32) ? 0.f : window.at(0, c, y, x);
      auto out = lm.net->forward(nullptr, ctx, r2i::BnMode::kInfer);
      r2i::blit_tensor(side, out.pred, pr * 32, img.width + pc * 32);
    }
  r2i::save_ppm(out_path, side);
  std::cout << "mean patch SSIM: " << mean_ssim << "\n";
  return 0;
}

int cmd_paramcount(const std::string& kind_name, int stages) {
  r2i::ModelKind kind;
  std::string reference;
  if (kind_name == "residual") {
    kind = r2i::ModelKind::kResidual;
    if (stages == 8) reference = "24.2M (reference)";
  } else if (kind_name == "prediction") {
    kind = r2i::ModelKind::kPrediction;
    if (stages == 8) reference = "24.2M (reference)";
  } else if (kind_name == "full") {
    kind = r2i::ModelKind::kFull;
    if (stages == 8) reference = "49.8M (reference)";
  } else if (kind_name == "decoding") {
    kind = r2i::ModelKind::kDecoding;
    if (stages == 8) reference = "29.2M (reference)";
  } else if (kind_name == "inpaint" || kind_name == "vanilla") {
    auto net = kind_name == "inpaint"
                   ? r2i::InpaintNet::build_multiscale(1)
                   : r2i::InpaintNet::build_vanilla(1);
    std::cout << kind_name << ": " << net.count_params()
              << " trainable parameters\n";
    return 0;
  } else {
    throw r2i::ArgError(
        "paramcount: --kind must be residual, prediction, full, decoding, "
        "inpaint or vanilla");
  }
  r2i::Model model = r2i::Model::build(kind, stages, /*seed=*/1);
  std::cout << kind_name << " S=" << stages << ": " << model.count_params()
            << " trainable parameters";
  if (!reference.empty()) std::cout << "  vs " << reference;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"r2i: multi-stage progressive image codec"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config;
  bool dump_defaults = false;
  int64_t seed_override = -1;
  int deterministic_override = -1;
  int train_threads = 0;
  train->add_option("--config", train_config, "flat key = value config file");
  train->add_flag("--dump-defaults", dump_defaults, "print defaults and exit");
  train->add_option("--seed", seed_override, "override train.seed");
  train->add_flag_callback("--deterministic",
                           [&] { deterministic_override = 1; },
                           "force the strictly sequential mode");
  train->add_option("--threads", train_threads, "override train.threads");

  // encode
  auto* encode = app.add_subcommand("encode", "compress an image to .r2i");
  std::string enc_model, enc_in, enc_out;
  int enc_stages = 0, enc_threads = 1;
  encode->add_option("--model", enc_model, "weight file (.r2iw)")->required();
  encode->add_option("--stages", enc_stages, "stages to emit (default: all)");
  encode->add_option("--threads", enc_threads, "BLAS threads (1 = sequential)");
  encode->add_option("input", enc_in, "input image (.ppm)")->required();
  encode->add_option("output", enc_out, "output stream (.r2i)")->required();

  // decode
  auto* decode = app.add_subcommand("decode", "decompress a .r2i stream");
  std::string dec_model, dec_in, dec_out;
  int dec_stage = 0, dec_threads = 1;
  decode->add_option("--model", dec_model, "weight file (.r2iw)")->required();
  decode->add_option("--stage", dec_stage, "decode up to stage (default: all)");
  decode->add_option("--threads", dec_threads, "BLAS threads (1 = sequential)");
  decode->add_option("input", dec_in, "input stream (.r2i)")->required();
  decode->add_option("output", dec_out, "output image (.ppm)")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "rate-distortion sweep and BD-rate");
  std::string ev_model, ev_images, ev_metric = "msssim", ev_out = "rd.csv";
  std::string ev_baseline, ev_report;
  int ev_stages = 0, ev_threads = 1;
  eval->add_option("--model", ev_model, "weight file (.r2iw)")->required();
  eval->add_option("--images", ev_images, "directory of .ppm images")->required();
  eval->add_option("--metric", ev_metric, "msssim | ssim");
  eval->add_option("--stages", ev_stages, "stages to sweep (default: all)");
  eval->add_option("--out", ev_out, "output RD curve csv");
  eval->add_option("--baseline", ev_baseline, "baseline RD curve csv");
  eval->add_option("--report", ev_report, "plain-text summary path");
  eval->add_option("--threads", ev_threads, "BLAS threads (1 = sequential)");

  // inpaint
  auto* inpaint = app.add_subcommand("inpaint", "predict patches from context");
  std::string inp_net, inp_in, inp_out;
  int inp_threads = 1;
  inpaint->add_option("--net", inp_net, "inpainting weight file")->required();
  inpaint->add_option("--threads", inp_threads, "BLAS threads (1 = sequential)");
  inpaint->add_option("input", inp_in, "input image (.ppm)")->required();
  inpaint->add_option("output", inp_out, "side-by-side output (.ppm)")->required();

  // paramcount
  auto* pc = app.add_subcommand("paramcount", "trainable parameter totals");
  std::string pc_kind = "decoding";
  int pc_stages = 8;
  pc->add_option("--kind", pc_kind,
                 "residual|prediction|full|decoding|inpaint|vanilla");
  pc->add_option("--stages", pc_stages, "stage count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train)
      return cmd_train(train_config, dump_defaults, seed_override,
                       deterministic_override, train_threads);
    if (*encode)
      return cmd_encode(enc_model, enc_in, enc_stages, enc_out, enc_threads);
    if (*decode)
      return cmd_decode(dec_model, dec_in, dec_stage, dec_out, dec_threads);
    if (*eval)
      return cmd_eval(ev_model, ev_images, ev_metric, ev_stages, ev_out,
                      ev_baseline, ev_report, ev_threads);
    if (*inpaint) return cmd_inpaint(inp_net, inp_in, inp_out, inp_threads);
    if (*pc) return cmd_paramcount(pc_kind, pc_stages);
  } catch (const r2i::IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const r2i::CorruptError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const r2i::ArgError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const r2i::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
