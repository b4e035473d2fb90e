#include "sprint/train.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <iostream>

#include "sprint/flow.hpp"
#include "sprint/grid.hpp"
#include "sprint/subsample.hpp"

namespace sprint {

double lr_at(int64_t phase_iter, Phase phase, const TrainConfig& cfg) {
  if (phase == Phase::pretrain) return cfg.pretrain_lr;
  if (cfg.finetune_warmup <= 0 || phase_iter >= cfg.finetune_warmup) return cfg.finetune_lr_peak;
  double frac = static_cast<double>(phase_iter) / static_cast<double>(cfg.finetune_warmup);
  return cfg.finetune_lr_start + (cfg.finetune_lr_peak - cfg.finetune_lr_start) * frac;
}

void ema_update(ParamStore<float>& ema, const ParamStore<float>& params, double decay) {
  if (ema.size() != params.size())
    throw std::invalid_argument("ema_update: parameter stores differ in size");
  if (decay < 0.0 || decay > 1.0) throw std::invalid_argument("ema_update: decay outside [0, 1]");
  float* e = ema.data().data();
  const float* p = params.data().data();
  int64_t n = params.size();
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i)
    e[i] = static_cast<float>(decay * static_cast<double>(e[i]) +
                              (1.0 - decay) * static_cast<double>(p[i]));
}

double grad_norm_of(const ParamStore<float>& grads, const std::string& prefix) {
  double acc = 0.0;
  bool matched = false;
  const float* g = grads.data().data();
  for (const auto& e : grads.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    matched = true;
    acc += Eigen::Map<const Eigen::ArrayXf>(g + e.offset, e.size).cast<double>().square().sum();
  }
  if (!matched) throw std::invalid_argument("grad_norm_of: no parameter matches '" + prefix + "'");
  return std::sqrt(acc);
}

double clip_grads(ParamStore<float>& grads, double max_norm) {
  double norm = grad_norm_of(grads, "");
  if (norm > max_norm && norm > 0.0) {
    float scale = static_cast<float>(max_norm / norm);
    float* g = grads.data().data();
    int64_t n = grads.size();
#pragma omp parallel for
    for (int64_t i = 0; i < n; ++i) g[i] *= scale;
  }
  return norm;
}

namespace {

void adamw_update(TrainState& st, const TrainConfig& cfg, double lr) {
  ++st.adam_t;
  double b1 = cfg.beta1, b2 = cfg.beta2;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.adam_t));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.adam_t));
  float* p = st.net.params.data().data();
  const float* g = st.grads.data().data();
  float* m = st.m.data();
  float* v = st.v.data();
  int64_t n = st.net.params.size();
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) {
    double gi = static_cast<double>(g[i]);
    double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
    double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    double mhat = mi / bc1;
    double vhat = vi / bc2;
    double step = mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * p[i];
    p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * step);
  }
}

StepMetrics train_step(TrainState& st, const Tensor<float>& x0_images,
                       const std::vector<int>& labels, const TrainConfig& cfg, Phase phase) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (st.phase != phase)
    throw std::logic_error(std::string("train_step: state is in phase ") +
                           phase_name(st.phase) + ", not " + phase_name(phase));
  const ModelConfig& mc = st.net.cfg;
  int64_t batch = x0_images.dim(0);
  if (static_cast<int64_t>(labels.size()) != batch)
    throw std::invalid_argument("train_step: labels do not match batch size");

  TokenBatch<float> x0 = patchify(x0_images, mc.patch);
  if (x0.grid_rows != mc.grid_rows || x0.grid_cols != mc.grid_cols)
    throw std::invalid_argument("train_step: image grid does not match the model");

  // per-iteration draws, in a fixed order
  std::vector<double> t = sample_timestep(batch, st.rng, cfg.time_loc, cfg.time_scale);
  Tensor<float> eps(x0.tokens.shape);
  for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<float>(st.rng.normal());
  DropMask mask;
  if (phase == Phase::pretrain) {
    if (cfg.drop_strategy == "structured")
      mask = structured_mask(mc.grid_rows, mc.grid_cols, cfg.group_n, cfg.group_k, st.rng);
    else
      mask = random_mask(mc.tokens(), cfg.drop_ratio, st.rng);
  } else {
    mask = keep_all_mask(mc.tokens());
  }
  std::vector<uint8_t> path_drop(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b)
    path_drop[static_cast<size_t>(b)] = st.rng.bernoulli(cfg.path_drop_prob) ? 1 : 0;
  std::vector<int> cls(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b)
    cls[static_cast<size_t>(b)] =
        st.rng.bernoulli(cfg.class_drop_prob) ? mc.null_class() : labels[static_cast<size_t>(b)];

  Tensor<float> x_t, v_target;
  interpolate(x0.tokens, eps, t, x_t, v_target);

  Tensor<float> pred({batch, mc.tokens(), mc.token_dim()});
  st.net.forward(x_t.data(), batch, t.data(), cls.data(), &mask, path_drop.data(), st.ws, true,
                 pred.data());
  double loss = velocity_loss(pred, v_target);
  if (!std::isfinite(loss)) {
    std::cerr << "train_step: non-finite loss " << loss << " at iteration "
              << (st.iteration + 1) << " (" << phase_name(phase)
              << "), |params|=" << grad_norm_of(st.net.params, "") << "\n";
    throw std::runtime_error("train_step: non-finite loss at iteration " +
                             std::to_string(st.iteration + 1));
  }

  Tensor<float> dpred;
  velocity_loss_grad(pred, v_target, dpred);
  st.net.backward(st.ws, dpred.data(), st.grads);

  StepMetrics mets;
  mets.phase = phase;
  mets.loss = loss;
  mets.f_grad_norm = grad_norm_of(st.grads, "f.");
  mets.lr = lr_at(st.phase_iter, phase, cfg);
  clip_grads(st.grads, cfg.clip);
  adamw_update(st, cfg, mets.lr);

  double decay = cfg.ema_decay;
  if (phase == Phase::finetune && st.phase_iter < cfg.finetune_warmup)
    decay = cfg.ema_warmup_decay;
  ema_update(st.ema, st.net.params, decay);

  ++st.iteration;
  ++st.phase_iter;
  mets.iteration = st.iteration;
  auto t1 = std::chrono::steady_clock::now();
  mets.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return mets;
}

}  // namespace

StepMetrics pretrain_step(TrainState& st, const Tensor<float>& x0_images,
                          const std::vector<int>& labels, const TrainConfig& cfg) {
  return train_step(st, x0_images, labels, cfg, Phase::pretrain);
}

StepMetrics finetune_step(TrainState& st, const Tensor<float>& x0_images,
                          const std::vector<int>& labels, const TrainConfig& cfg) {
  return train_step(st, x0_images, labels, cfg, Phase::finetune);
}

}  // namespace sprint
