#pragma once

#include <cstdint>
#include <stdexcept>

namespace sprint {

struct ModelConfig;  // net.hpp

// Analytical FLOPs accounting for one forward pass, multiplies and adds
// counted separately (1 MAC = 2 FLOPs). Totals cover the guidance modes:
// a cfg step runs two dense passes, a pdg step one dense pass plus the
// shallow pass that bypasses the middle blocks.
struct FlopsReport {
  int64_t embedder = 0;     // patch projection + timestep/class embedders
  int64_t f_stage = 0;      // encoder blocks at N tokens
  int64_t g_stage_sparse = 0;  // middle blocks at N - floor(rN) tokens
  int64_t g_stage_dense = 0;   // middle blocks at N tokens
  int64_t h_stage = 0;      // decoder blocks at N tokens
  int64_t fusion = 0;
  int64_t head = 0;

  int64_t dense_forward = 0;
  int64_t sparse_forward = 0;
  int64_t pdg_uncond_forward = 0;
  int64_t cfg_step = 0;
  int64_t pdg_step = 0;
};

// One transformer block at `tokens` tokens: qkv + output projections
// (4 * 2tC^2), attention score/value contractions (2 * 2t^2C), feed-forward
// at expansion 4 (2 * 2tC*4C), the AdaLN modulation linear (2tC*6C), and a
// 5tC allowance for norms and elementwise work.
inline int64_t flops_block(int64_t tokens, int64_t channels, int64_t heads) {
  if (heads <= 0 || channels % heads != 0)
    throw std::invalid_argument("flops_block: channels not divisible by heads");
  int64_t t = tokens, c = channels;
  int64_t proj = 4 * 2 * t * c * c;
  int64_t attn = 2 * 2 * t * t * c;
  int64_t ffn = 2 * 2 * t * c * 4 * c;
  int64_t adaln = 2 * t * c * 6 * c;
  int64_t elem = 5 * t * c;
  return proj + attn + ffn + adaln + elem;
}

FlopsReport flops_model(const ModelConfig& cfg, double r);

}  // namespace sprint
