#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sprint/net.hpp"
#include "sprint/tensor.hpp"

namespace sprint {

enum class GuidanceMode { none, cfg, pdg };

inline const char* guidance_name(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::none: return "none";
    case GuidanceMode::cfg: return "cfg";
    case GuidanceMode::pdg: return "pdg";
  }
  throw std::logic_error("guidance_name: bad mode");
}

GuidanceMode guidance_from_name(const std::string& s);

struct SamplerSpec {
  int64_t steps = 50;
  GuidanceMode mode = GuidanceMode::pdg;
  double w = 2.0;
  std::vector<int> labels;  // one class per requested sample
  uint64_t seed = 0;

  void validate(const ModelConfig& mc) const {
    if (steps < 1) throw std::invalid_argument("SamplerSpec: steps must be >= 1");
    if (w < 0.0) throw std::invalid_argument("SamplerSpec: guidance scale must be >= 0");
    if (labels.empty()) throw std::invalid_argument("SamplerSpec: no samples requested");
    for (int c : labels)
      if (c < 0 || c >= mc.num_classes)
        throw std::invalid_argument("SamplerSpec: label " + std::to_string(c) +
                                    " outside [0, " + std::to_string(mc.num_classes) + ")");
  }
};

// v~ = v_uncond + w * (v_cond - v_uncond); w=1 and w=0 return the inputs
// verbatim.
template <typename T>
void guided_velocity(const Tensor<T>& v_cond, const Tensor<T>& v_uncond, double w,
                     Tensor<T>& out);

// The unconditional branch of Path-Drop Guidance: the sparse path is replaced
// by the mask token at every position and the class embedding is the null
// class, so the middle blocks are never evaluated.
template <typename T>
void pdg_uncond(const Net<T>& net, const T* x_t, int64_t batch, double t, Workspace<T>& ws,
                T* out);

// x <- x - dt * v
template <typename T>
void euler_step(Tensor<T>& x, const Tensor<T>& v, double dt);

// Euler integration from Gaussian noise at t=1 down to t=0 over the grid
// {1, (N-1)/N, ..., 1/N}, then unpatchify. Returns images
// (B, H, W, channels). Deterministic in (net params, spec).
template <typename T>
Tensor<T> generate(const Net<T>& net, const SamplerSpec& spec);

}  // namespace sprint
