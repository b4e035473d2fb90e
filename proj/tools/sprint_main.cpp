#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sprint/arrayio.hpp"
#include "sprint/checkpoint.hpp"
#include "sprint/config.hpp"
#include "sprint/cost.hpp"
#include "sprint/dataset.hpp"
#include "sprint/pipeline.hpp"
#include "sprint/sample.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_train(const std::string& config_path, const std::string& resume) {
  sprint::RunConfig cfg = sprint::load_config(config_path);
  sprint::PipelineResult res = sprint::run_pipeline(cfg, resume);
  std::cout << "run complete: " << res.out_dir << "\n";
  for (const auto& [mode, acc] : res.accuracy)
    std::cout << "quadrant_accuracy[" << mode << "] = " << acc << "\n";
  return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& from) {
  sprint::RunConfig cfg = sprint::load_config(config_path);
  sprint::PipelineResult res = sprint::run_finetune_phase(cfg, from);
  std::cout << "finetune complete: " << res.final_checkpoint << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& mode, double w, int64_t steps,
               int64_t n, int cls, uint64_t seed, const std::string& out_dir, bool raw) {
  auto st = sprint::load_checkpoint(ckpt);
  sprint::Net<float> net(st->net.cfg);
  net.params.data() = raw ? st->net.params.data() : st->ema.data();
  net.bind();

  sprint::SamplerSpec spec;
  spec.steps = steps;
  spec.mode = sprint::guidance_from_name(mode);
  spec.w = w;
  spec.seed = seed;
  spec.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    spec.labels[static_cast<size_t>(i)] =
        cls >= 0 ? cls : static_cast<int>(i % net.cfg.num_classes);

  sprint::Tensor<float> images = sprint::generate(net, spec);
  fs::create_directories(out_dir);
  int64_t per = images.numel() / images.dim(0);
  std::vector<int64_t> img_shape(images.shape.begin() + 1, images.shape.end());
  for (int64_t i = 0; i < images.dim(0); ++i) {
    sprint::Tensor<float> one(img_shape);
    std::copy(images.data() + i * per, images.data() + (i + 1) * per, one.data());
    std::string name = "sample_" + std::to_string(spec.labels[static_cast<size_t>(i)]) + "_" +
                       std::to_string(i);
    sprint::write_array((fs::path(out_dir) / (name + ".arr")).string(), one);
    if (images.dim(3) == 1)
      sprint::write_pgm((fs::path(out_dir) / (name + ".pgm")).string(), one.data(),
                        static_cast<int>(images.dim(1)), static_cast<int>(images.dim(2)));
  }
  double acc = sprint::quadrant_accuracy(images, spec.labels);
  std::cout << "wrote " << images.dim(0) << " samples to " << out_dir
            << "\nquadrant_accuracy = " << acc << "\n";
  return 0;
}

int cmd_eval(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string name = e.path().filename().string();
    if (name.rfind("sample_", 0) == 0 && e.path().extension() == ".arr")
      files.push_back(e.path());
  }
  if (files.empty()) throw std::runtime_error("eval: no sample_*.arr files under " + dir);
  std::sort(files.begin(), files.end());

  std::vector<sprint::Tensor<float>> imgs;
  std::vector<int> labels;
  for (const auto& p : files) {
    std::string stem = p.stem().string();  // sample_{class}_{index}
    size_t a = stem.find('_');
    size_t b = stem.find('_', a + 1);
    if (a == std::string::npos || b == std::string::npos)
      throw std::runtime_error("eval: cannot parse class from " + p.filename().string());
    labels.push_back(std::stoi(stem.substr(a + 1, b - a - 1)));
    imgs.push_back(sprint::read_array(p.string()));
    if (imgs.back().shape != imgs.front().shape)
      throw std::runtime_error("eval: mixed sample shapes under " + dir);
  }
  std::vector<int64_t> shape = imgs.front().shape;
  shape.insert(shape.begin(), static_cast<int64_t>(imgs.size()));
  sprint::Tensor<float> batch(shape);
  int64_t per = imgs.front().numel();
  for (size_t i = 0; i < imgs.size(); ++i)
    std::copy(imgs[i].data(), imgs[i].data() + per,
              batch.data() + static_cast<int64_t>(i) * per);
  double acc = sprint::quadrant_accuracy(batch, labels);
  std::cout << "samples = " << imgs.size() << "\nquadrant_accuracy = " << acc << "\n";
  return 0;
}

int cmd_flops(const std::string& config_path, double ratio, const std::string& mode,
              const std::string& format) {
  sprint::RunConfig cfg = sprint::load_config(config_path);
  double r = ratio;
  if (r < 0.0) {
    r = cfg.train.drop_strategy == "structured"
            ? 1.0 - static_cast<double>(cfg.train.group_k) /
                        (static_cast<double>(cfg.train.group_n) * cfg.train.group_n)
            : cfg.train.drop_ratio;
  }
  sprint::FlopsReport rep = sprint::flops_model(cfg.model, r);

  std::vector<std::pair<std::string, int64_t>> rows = {
      {"embedder", rep.embedder},
      {"f_stage", rep.f_stage},
      {"g_stage_sparse", rep.g_stage_sparse},
      {"g_stage_dense", rep.g_stage_dense},
      {"h_stage", rep.h_stage},
      {"fusion", rep.fusion},
      {"head", rep.head},
      {"dense_forward", rep.dense_forward},
      {"sparse_forward", rep.sparse_forward},
      {"pdg_uncond_forward", rep.pdg_uncond_forward},
      {"cfg_step", rep.cfg_step},
      {"pdg_step", rep.pdg_step},
  };
  if (!mode.empty()) {
    std::string key = mode + "_step";
    if (mode == "dense" || mode == "sparse") key = mode + "_forward";
    if (mode == "pdg_uncond") key = "pdg_uncond_forward";
    std::erase_if(rows, [&](const auto& kv) { return kv.first != key; });
    if (rows.empty()) throw std::runtime_error("flops: unknown mode '" + mode + "'");
  }
  if (format == "csv") {
    std::cout << "stage,flops\n";
    for (const auto& [k, v] : rows) std::cout << k << "," << v << "\n";
  } else {
    std::cout << "per-sample FLOPs at r = " << r << "\n";
    for (const auto& [k, v] : rows) printf("  %-20s %16lld\n", k.c_str(),
                                           static_cast<long long>(v));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-dense residual diffusion transformer"};
  app.require_subcommand(1);

  std::string config_path, resume, from, ckpt, out_dir = "samples", samples_dir;
  std::string mode = "pdg", format = "table", flops_mode;
  double w = 2.0, ratio = -1.0;
  int64_t steps = 50, count = 16;
  int cls = -1;
  uint64_t seed = 0;
  bool raw = false;

  auto* train = app.add_subcommand("train", "pretrain, finetune, sample, and evaluate");
  train->add_option("--config", config_path, "run config path")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* finetune = app.add_subcommand("finetune", "finetune phase from a checkpoint");
  finetune->add_option("--config", config_path, "run config path")->required();
  finetune->add_option("--from", from, "checkpoint to start from")->required();

  auto* sample = app.add_subcommand("sample", "generate images from a checkpoint");
  sample->add_option("--ckpt", ckpt, "checkpoint path")->required();
  sample->add_option("--mode", mode, "guidance mode: none | cfg | pdg");
  sample->add_option("--w", w, "guidance scale");
  sample->add_option("--steps", steps, "Euler steps");
  sample->add_option("--n", count, "number of samples");
  sample->add_option("--class", cls, "fixed class label (default: cycle through classes)");
  sample->add_option("--seed", seed, "noise seed");
  sample->add_option("--out", out_dir, "output directory");
  sample->add_flag("--raw-weights", raw, "sample with raw instead of EMA weights");

  auto* eval = app.add_subcommand("eval", "score sample arrays against their labels");
  eval->add_option("--samples", samples_dir, "directory of sample_*.arr files")->required();

  auto* flops = app.add_subcommand("flops", "analytical per-sample cost model");
  flops->add_option("--config", config_path, "run config path")->required();
  flops->add_option("--ratio", ratio, "token drop ratio (default: from the config)");
  flops->add_option("--mode", flops_mode,
                    "print one total: dense | sparse | pdg_uncond | cfg | pdg");
  flops->add_option("--format", format, "table | csv")
      ->check(CLI::IsMember({"table", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, resume);
    if (finetune->parsed()) return cmd_finetune(config_path, from);
    if (sample->parsed())
      return cmd_sample(ckpt, mode, w, steps, count, cls, seed, out_dir, raw);
    if (eval->parsed()) return cmd_eval(samples_dir);
    if (flops->parsed()) return cmd_flops(config_path, ratio, flops_mode, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
