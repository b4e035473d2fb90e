#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sprint/kernels.hpp"
#include "sprint/rng.hpp"
#include "sprint/tensor.hpp"

namespace sprint {

// Linear interpolant x_t = (1-t) x0 + t eps with constant velocity target
// eps - x0. t enters per sample; x0/eps are (B, N, C).
template <typename T>
void interpolate(const Tensor<T>& x0, const Tensor<T>& eps, const std::vector<double>& t,
                 Tensor<T>& x_t, Tensor<T>& v_target) {
  if (!x0.same_shape(eps))
    throw std::invalid_argument("interpolate: x0 " + shape_str(x0.shape) + " vs eps " +
                                shape_str(eps.shape));
  int64_t b = x0.dim(0);
  if (static_cast<int64_t>(t.size()) != b)
    throw std::invalid_argument("interpolate: t entries != batch size");
  for (double ti : t)
    if (ti < 0.0 || ti > 1.0) throw std::invalid_argument("interpolate: t outside [0, 1]");
  if (!x_t.same_shape(x0)) x_t = Tensor<T>(x0.shape);
  if (!v_target.same_shape(x0)) v_target = Tensor<T>(x0.shape);
  int64_t per = x0.numel() / b;
  for (int64_t bi = 0; bi < b; ++bi) {
    double ti = t[static_cast<size_t>(bi)];
    const T* x0b = x0.data() + bi * per;
    const T* eb = eps.data() + bi * per;
    T* xb = x_t.data() + bi * per;
    T* vb = v_target.data() + bi * per;
    for (int64_t i = 0; i < per; ++i) {
      double x = static_cast<double>(x0b[i]);
      double e = static_cast<double>(eb[i]);
      xb[i] = static_cast<T>((1.0 - ti) * x + ti * e);
      vb[i] = static_cast<T>(e - x);
    }
  }
}

// Logit-normal timestep draw: t = logistic(loc + scale * z), z ~ N(0,1).
// Mid-weighted on (0,1); loc/scale default to (0,1).
inline std::vector<double> sample_timestep(int64_t batch, Rng& rng, double loc = 0.0,
                                           double scale = 1.0) {
  std::vector<double> t(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    double z = loc + scale * rng.normal();
    t[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-z));
  }
  return t;
}

// Mean squared error over every batch/token/channel entry.
template <typename T>
double velocity_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("velocity_loss: pred " + shape_str(pred.shape) + " vs target " +
                                shape_str(target.shape));
  return kernels::mse(pred.numel(), pred.data(), target.data());
}

// d(velocity_loss)/d(pred) = 2 (pred - target) / numel.
template <typename T>
void velocity_loss_grad(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& dpred) {
  if (!dpred.same_shape(pred)) dpred = Tensor<T>(pred.shape);
  double inv = 2.0 / static_cast<double>(pred.numel());
  const T* p = pred.data();
  const T* g = target.data();
  T* d = dpred.data();
  for (int64_t i = 0; i < pred.numel(); ++i)
    d[i] = static_cast<T>((static_cast<double>(p[i]) - static_cast<double>(g[i])) * inv);
}

}  // namespace sprint
