#include "sprint/pipeline.hpp"

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "sprint/arrayio.hpp"
#include "sprint/checkpoint.hpp"
#include "sprint/cost.hpp"
#include "sprint/dataset.hpp"
#include "sprint/sample.hpp"

namespace sprint {

namespace {

namespace fs = std::filesystem;

std::string ckpt_name(int64_t iteration) {
  std::ostringstream s;
  s << "ckpt_" << std::setw(6) << std::setfill('0') << iteration << ".sprint";
  return s.str();
}

struct MetricSinks {
  std::ofstream metrics;
  std::ofstream timings;

  void open(const fs::path& dir, bool append) {
    auto mode = std::ios::binary | (append ? std::ios::app : std::ios::trunc);
    metrics.open(dir / "metrics.ndjson", mode);
    timings.open(dir / "timings.ndjson", mode);
    if (!metrics || !timings)
      throw std::runtime_error("pipeline: cannot open metric logs under " + dir.string());
  }

  void record(const StepMetrics& m) {
    nlohmann::json rec = {{"iter", m.iteration},
                          {"phase", phase_name(m.phase)},
                          {"loss", m.loss},
                          {"f_grad_norm", m.f_grad_norm},
                          {"lr", m.lr}};
    metrics << rec.dump() << "\n";
    metrics.flush();
    nlohmann::json t = {{"iter", m.iteration}, {"wall_ms", m.wall_ms}};
    timings << t.dump() << "\n";
    timings.flush();
  }
};

struct CurveStats {
  std::vector<double> loss;
  std::vector<double> f_grad_norm;

  void push(const StepMetrics& m) {
    loss.push_back(m.loss);
    f_grad_norm.push_back(m.f_grad_norm);
  }
};

void run_phase(TrainState& st, const RunConfig& cfg, const BlobDataset& ds, Phase phase,
               int64_t total_iters, MetricSinks& sinks, CurveStats& curves,
               const fs::path& out) {
  Tensor<float> x0;
  std::vector<int> labels;
  std::vector<int64_t> idx(static_cast<size_t>(cfg.train.batch));
  while (st.phase_iter < total_iters) {
    for (auto& i : idx) i = static_cast<int64_t>(st.rng.below(static_cast<uint64_t>(ds.spec.size)));
    gather_batch(ds, idx, x0, labels);
    StepMetrics m = phase == Phase::pretrain ? pretrain_step(st, x0, labels, cfg.train)
                                             : finetune_step(st, x0, labels, cfg.train);
    sinks.record(m);
    curves.push(m);
    if (st.iteration % cfg.ckpt_every == 0)
      save_checkpoint((out / ckpt_name(st.iteration)).string(), st);
  }
}

double run_sampling_mode(const Net<float>& net, const RunConfig& cfg, GuidanceMode mode,
                         const fs::path& out, nlohmann::json* summary_modes) {
  SamplerSpec spec;
  spec.steps = cfg.sample_steps;
  spec.mode = mode;
  spec.w = cfg.sample_w;
  spec.seed = cfg.seed;
  spec.labels.resize(static_cast<size_t>(cfg.sample_count));
  for (int64_t i = 0; i < cfg.sample_count; ++i)
    spec.labels[static_cast<size_t>(i)] = static_cast<int>(i % net.cfg.num_classes);

  Tensor<float> images = generate(net, spec);
  double acc = quadrant_accuracy(images, spec.labels);

  fs::path dir = out / (std::string("samples_") + guidance_name(mode));
  fs::create_directories(dir);
  int64_t per = images.numel() / images.dim(0);
  std::vector<int64_t> img_shape(images.shape.begin() + 1, images.shape.end());
  for (int64_t i = 0; i < images.dim(0); ++i) {
    Tensor<float> one(img_shape);
    std::copy(images.data() + i * per, images.data() + (i + 1) * per, one.data());
    std::ostringstream name;
    name << "sample_" << spec.labels[static_cast<size_t>(i)] << "_" << i;
    write_array((dir / (name.str() + ".arr")).string(), one);
    if (i < 16 && images.dim(3) == 1)
      write_pgm((dir / (name.str() + ".pgm")).string(), one.data(),
                static_cast<int>(images.dim(1)), static_cast<int>(images.dim(2)));
  }
  (*summary_modes)[guidance_name(mode)] = acc;
  return acc;
}

nlohmann::json flops_to_json(const FlopsReport& r) {
  return {{"embedder", r.embedder},
          {"f_stage", r.f_stage},
          {"g_stage_sparse", r.g_stage_sparse},
          {"g_stage_dense", r.g_stage_dense},
          {"h_stage", r.h_stage},
          {"fusion", r.fusion},
          {"head", r.head},
          {"dense_forward", r.dense_forward},
          {"sparse_forward", r.sparse_forward},
          {"pdg_uncond_forward", r.pdg_uncond_forward},
          {"cfg_step", r.cfg_step},
          {"pdg_step", r.pdg_step}};
}

double train_drop_ratio(const TrainConfig& t) {
  if (t.drop_strategy == "structured")
    return 1.0 - static_cast<double>(t.group_k) /
                     (static_cast<double>(t.group_n) * t.group_n);
  return t.drop_ratio;
}

PipelineResult finish_summary(const RunConfig& cfg, const fs::path& out,
                              const CurveStats& curves, nlohmann::json accuracy,
                              const std::string& final_ckpt) {
  PipelineResult res;
  res.out_dir = out.string();
  res.final_checkpoint = final_ckpt;

  nlohmann::json summary;
  summary["accuracy"] = accuracy;
  for (auto& [k, v] : accuracy.items()) res.accuracy[k] = v.get<double>();
  summary["flops"] = flops_to_json(flops_model(cfg.model, train_drop_ratio(cfg.train)));
  summary["loss"] = curves.loss;
  summary["f_grad_norm"] = curves.f_grad_norm;
  if (!curves.loss.empty()) {
    size_t first = std::min<size_t>(50, curves.loss.size());
    double acc = 0.0;
    for (size_t i = 0; i < first; ++i) acc += curves.loss[i];
    res.loss_first50_avg = acc / static_cast<double>(first);
    res.loss_final = curves.loss.back();
    summary["loss_first50_avg"] = res.loss_first50_avg;
    summary["loss_final"] = res.loss_final;
  }
  summary["steps"] = curves.loss.size();

  std::ofstream sf(out / "summary.json", std::ios::binary | std::ios::trunc);
  if (!sf) throw std::runtime_error("pipeline: cannot write summary.json");
  sf << summary.dump(2) << "\n";
  return res;
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const std::string& resume) {
  cfg.validate();
  apply_threads(cfg);
  fs::path out(cfg.out_dir);
  fs::create_directories(out);
  {
    std::ofstream cf(out / "config.txt", std::ios::binary | std::ios::trunc);
    cf << "# resolved run configuration\n" << config_text(cfg);
  }

  BlobDataset ds = make_blob_dataset(cfg.data);

  std::unique_ptr<TrainState> loaded;
  TrainState* st = nullptr;
  if (!resume.empty()) {
    loaded = load_checkpoint(resume);
    if (!(loaded->net.cfg == cfg.model))
      throw std::runtime_error("pipeline: checkpoint model config differs from the run config");
    st = loaded.get();
  } else {
    loaded = std::make_unique<TrainState>(cfg.model, cfg.seed);
    st = loaded.get();
  }

  MetricSinks sinks;
  sinks.open(out, !resume.empty());
  CurveStats curves;

  if (st->phase == Phase::pretrain) {
    run_phase(*st, cfg, ds, Phase::pretrain, cfg.train.pretrain_iters, sinks, curves, out);
    st->phase = Phase::finetune;
    st->phase_iter = 0;
  }
  if (st->phase == Phase::finetune)
    run_phase(*st, cfg, ds, Phase::finetune, cfg.train.finetune_iters, sinks, curves, out);

  std::string final_ckpt = (out / "ckpt_final.sprint").string();
  save_checkpoint(final_ckpt, *st);

  // sampling uses the EMA weights
  Net<float> ema_net(cfg.model);
  ema_net.params.data() = st->ema.data();
  ema_net.bind();
  nlohmann::json accuracy = nlohmann::json::object();
  for (GuidanceMode mode : {GuidanceMode::none, GuidanceMode::cfg, GuidanceMode::pdg})
    run_sampling_mode(ema_net, cfg, mode, out, &accuracy);

  return finish_summary(cfg, out, curves, std::move(accuracy), final_ckpt);
}

PipelineResult run_finetune_phase(const RunConfig& cfg, const std::string& from_ckpt) {
  cfg.validate();
  apply_threads(cfg);
  fs::path out(cfg.out_dir);
  fs::create_directories(out);

  BlobDataset ds = make_blob_dataset(cfg.data);
  std::unique_ptr<TrainState> st = load_checkpoint(from_ckpt);
  if (!(st->net.cfg == cfg.model))
    throw std::runtime_error("pipeline: checkpoint model config differs from the run config");
  if (st->phase == Phase::pretrain) {
    st->phase = Phase::finetune;
    st->phase_iter = 0;
  }

  MetricSinks sinks;
  sinks.open(out, true);
  CurveStats curves;
  run_phase(*st, cfg, ds, Phase::finetune, cfg.train.finetune_iters, sinks, curves, out);

  std::string final_ckpt = (out / "ckpt_final.sprint").string();
  save_checkpoint(final_ckpt, *st);

  PipelineResult res;
  res.out_dir = out.string();
  res.final_checkpoint = final_ckpt;
  if (!curves.loss.empty()) res.loss_final = curves.loss.back();
  return res;
}

}  // namespace sprint
