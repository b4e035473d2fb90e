#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sprint/net.hpp"
#include "sprint/rng.hpp"
#include "sprint/tensor.hpp"

namespace sprint {

enum class Phase { pretrain, finetune };

inline const char* phase_name(Phase p) { return p == Phase::pretrain ? "pretrain" : "finetune"; }

struct TrainConfig {
  int64_t pretrain_iters = 5000;
  int64_t finetune_iters = 1000;
  int64_t batch = 64;

  // token dropping during pre-training
  std::string drop_strategy = "structured";  // "structured" | "random"
  int group_n = 2;                           // structured: group edge
  int group_k = 1;                           // structured: kept per group
  double drop_ratio = 0.75;                  // random: fraction dropped

  double path_drop_prob = 0.1;
  double class_drop_prob = 0.1;

  double pretrain_lr = 1e-4;
  double finetune_lr_start = 2e-6;
  double finetune_lr_peak = 2e-4;
  int64_t finetune_warmup = 100;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double clip = 1.0;

  double ema_decay = 0.999;
  double ema_warmup_decay = 0.99;

  double time_loc = 0.0;
  double time_scale = 1.0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(path_drop_prob) || !prob(class_drop_prob))
      throw std::invalid_argument("TrainConfig: probabilities must lie in [0, 1]");
    if (clip <= 0.0) throw std::invalid_argument("TrainConfig: clip norm must be positive");
    if (batch <= 0) throw std::invalid_argument("TrainConfig: batch must be positive");
    if (pretrain_iters < 0 || finetune_iters < 0 || finetune_warmup < 0)
      throw std::invalid_argument("TrainConfig: iteration counts must be nonnegative");
    if (drop_strategy != "structured" && drop_strategy != "random")
      throw std::invalid_argument("TrainConfig: drop strategy must be structured or random");
    if (!prob(ema_decay) || !prob(ema_warmup_decay))
      throw std::invalid_argument("TrainConfig: EMA decays must lie in [0, 1]");
  }
};

struct StepMetrics {
  int64_t iteration = 0;  // global 1-based step counter
  Phase phase = Phase::pretrain;
  double loss = 0.0;
  double f_grad_norm = 0.0;  // pre-clip l2 norm over encoder parameters
  double lr = 0.0;
  double wall_ms = 0.0;  // measurement only, not part of the deterministic record
};

// Everything a training run carries between steps. The rng stream covers
// parameter init and all per-step draws, so (config, seed) fixes the run.
struct TrainState {
  TrainState(const ModelConfig& mc, uint64_t seed)
      : net(mc), ema(net.params.like()), grads(net.params.like()), rng(seed) {
    net.init_params(rng);
    ema.data() = net.params.data();
    m.assign(static_cast<size_t>(net.params.size()), 0.0f);
    v.assign(static_cast<size_t>(net.params.size()), 0.0f);
  }

  Net<float> net;
  ParamStore<float> ema;
  ParamStore<float> grads;
  std::vector<float> m, v;  // Adam first/second moments
  int64_t iteration = 0;    // completed steps across both phases
  int64_t adam_t = 0;
  Phase phase = Phase::pretrain;
  int64_t phase_iter = 0;  // completed steps within the current phase
  Rng rng;
  Workspace<float> ws;
};

// Linear warmup from lr_start to lr_peak in finetune, constant in pretrain.
double lr_at(int64_t phase_iter, Phase phase, const TrainConfig& cfg);

// ema' = decay * ema + (1 - decay) * params, elementwise.
void ema_update(ParamStore<float>& ema, const ParamStore<float>& params, double decay);

// l2 norm over every entry whose name starts with prefix; throws if nothing
// matches. Empty prefix covers the whole store.
double grad_norm_of(const ParamStore<float>& grads, const std::string& prefix);

// Scales gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_grads(ParamStore<float>& grads, double max_norm);

// One optimization step on an image batch (B, H, W, ch) with raw labels.
// pretrain_step draws the iteration's shared token mask; finetune_step runs
// every token through the middle blocks. Both draw, in order: t, noise,
// (mask,) path-drop flags, class-drop flags.
StepMetrics pretrain_step(TrainState& st, const Tensor<float>& x0_images,
                          const std::vector<int>& labels, const TrainConfig& cfg);
StepMetrics finetune_step(TrainState& st, const Tensor<float>& x0_images,
                          const std::vector<int>& labels, const TrainConfig& cfg);

}  // namespace sprint
