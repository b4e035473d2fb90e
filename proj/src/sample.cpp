#include "sprint/sample.hpp"

#include <algorithm>
#include <cstring>

#include "sprint/grid.hpp"
#include "sprint/rng.hpp"

namespace sprint {

GuidanceMode guidance_from_name(const std::string& s) {
  if (s == "none") return GuidanceMode::none;
  if (s == "cfg") return GuidanceMode::cfg;
  if (s == "pdg") return GuidanceMode::pdg;
  throw std::invalid_argument("guidance mode must be one of none, cfg, pdg (got '" + s + "')");
}

template <typename T>
void guided_velocity(const Tensor<T>& v_cond, const Tensor<T>& v_uncond, double w,
                     Tensor<T>& out) {
  if (!v_cond.same_shape(v_uncond))
    throw std::invalid_argument("guided_velocity: mismatched shapes " +
                                shape_str(v_cond.shape) + " vs " + shape_str(v_uncond.shape));
  if (!out.same_shape(v_cond)) out = Tensor<T>(v_cond.shape);
  if (w == 1.0) {
    std::copy(v_cond.v.begin(), v_cond.v.end(), out.v.begin());
    return;
  }
  if (w == 0.0) {
    std::copy(v_uncond.v.begin(), v_uncond.v.end(), out.v.begin());
    return;
  }
  T wt = static_cast<T>(w);
  int64_t n = v_cond.numel();
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) out[i] = v_uncond[i] + wt * (v_cond[i] - v_uncond[i]);
}

template <typename T>
void pdg_uncond(const Net<T>& net, const T* x_t, int64_t batch, double t, Workspace<T>& ws,
                T* out) {
  std::vector<double> tv(static_cast<size_t>(batch), t);
  std::vector<int> labels(static_cast<size_t>(batch), net.cfg.null_class());
  std::vector<uint8_t> dropped(static_cast<size_t>(batch), 1);
  net.forward(x_t, batch, tv.data(), labels.data(), nullptr, dropped.data(), ws, false, out);
}

template <typename T>
void euler_step(Tensor<T>& x, const Tensor<T>& v, double dt) {
  if (!x.same_shape(v))
    throw std::invalid_argument("euler_step: mismatched shapes " + shape_str(x.shape) + " vs " +
                                shape_str(v.shape));
  T d = static_cast<T>(dt);
  int64_t n = x.numel();
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) x[i] -= d * v[i];
}

namespace {
constexpr int64_t kChunk = 64;
}

template <typename T>
Tensor<T> generate(const Net<T>& net, const SamplerSpec& spec) {
  const ModelConfig& mc = net.cfg;
  spec.validate(mc);
  int64_t total = static_cast<int64_t>(spec.labels.size());
  int64_t n = mc.tokens();
  int64_t d = mc.token_dim();

  // all noise drawn up front so chunking does not affect the stream
  Rng rng(spec.seed);
  Tensor<T> x1({total, n, d});
  for (int64_t i = 0; i < x1.numel(); ++i) x1[i] = static_cast<T>(rng.normal());

  Tensor<T> images({total, static_cast<int64_t>(mc.grid_rows) * mc.patch,
                    static_cast<int64_t>(mc.grid_cols) * mc.patch, mc.in_channels});
  Workspace<T> ws;
  Tensor<T> x, v_cond, v_uncond, v;
  std::vector<uint8_t> no_drop;
  std::vector<int> cond_labels, null_labels;

  for (int64_t start = 0; start < total; start += kChunk) {
    int64_t b = std::min(kChunk, total - start);
    x = Tensor<T>({b, n, d});
    std::memcpy(x.data(), x1.data() + start * n * d, sizeof(T) * b * n * d);
    v_cond = Tensor<T>({b, n, d});
    v_uncond = Tensor<T>({b, n, d});
    no_drop.assign(static_cast<size_t>(b), 0);
    cond_labels.assign(spec.labels.begin() + start, spec.labels.begin() + start + b);
    null_labels.assign(static_cast<size_t>(b), mc.null_class());

    for (int64_t i = spec.steps; i >= 1; --i) {
      double t = static_cast<double>(i) / static_cast<double>(spec.steps);
      std::vector<double> tv(static_cast<size_t>(b), t);
      net.forward(x.data(), b, tv.data(), cond_labels.data(), nullptr, no_drop.data(), ws,
                  false, v_cond.data());
      switch (spec.mode) {
        case GuidanceMode::none:
          v = v_cond;
          break;
        case GuidanceMode::cfg:
          net.forward(x.data(), b, tv.data(), null_labels.data(), nullptr, no_drop.data(), ws,
                      false, v_uncond.data());
          guided_velocity(v_cond, v_uncond, spec.w, v);
          break;
        case GuidanceMode::pdg:
          pdg_uncond(net, x.data(), b, t, ws, v_uncond.data());
          guided_velocity(v_cond, v_uncond, spec.w, v);
          break;
      }
      euler_step(x, v, 1.0 / static_cast<double>(spec.steps));
    }

    TokenBatch<T> tb;
    tb.tokens = x;
    tb.positions = make_positions(mc.grid_rows, mc.grid_cols);
    tb.grid_rows = mc.grid_rows;
    tb.grid_cols = mc.grid_cols;
    Tensor<T> chunk_imgs = unpatchify(tb, mc.patch, mc.in_channels);
    std::memcpy(images.data() + start * (images.numel() / total), chunk_imgs.data(),
                sizeof(T) * chunk_imgs.numel());
  }
  return images;
}

#define SPRINT_SAMPLE_INST(T)                                                              \
  template void guided_velocity<T>(const Tensor<T>&, const Tensor<T>&, double, Tensor<T>&); \
  template void pdg_uncond<T>(const Net<T>&, const T*, int64_t, double, Workspace<T>&, T*); \
  template void euler_step<T>(Tensor<T>&, const Tensor<T>&, double);                       \
  template Tensor<T> generate<T>(const Net<T>&, const SamplerSpec&);

SPRINT_SAMPLE_INST(float)
SPRINT_SAMPLE_INST(double)

#undef SPRINT_SAMPLE_INST

}  // namespace sprint
