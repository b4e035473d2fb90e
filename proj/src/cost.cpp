#include "sprint/cost.hpp"

#include <cmath>

#include "sprint/net.hpp"

namespace sprint {

FlopsReport flops_model(const ModelConfig& cfg, double r) {
  if (r < 0.0 || r >= 1.0) throw std::invalid_argument("flops_model: r outside [0, 1)");
  cfg.validate();
  int64_t n = cfg.tokens();
  int64_t c = cfg.hidden;
  int64_t cin = cfg.token_dim();
  int64_t kept = n - static_cast<int64_t>(std::floor(r * static_cast<double>(n)));

  FlopsReport rep;
  // patch projection, 256-feature timestep MLP, class row add
  rep.embedder = 2 * n * cin * c + 2 * kTimeFeatureDim * c + 2 * c * c + c;
  for (int i = 0; i < cfg.enc_depth; ++i) rep.f_stage += flops_block(n, c, cfg.heads);
  for (int i = 0; i < cfg.mid_depth; ++i) {
    rep.g_stage_sparse += flops_block(kept, c, cfg.heads);
    rep.g_stage_dense += flops_block(n, c, cfg.heads);
  }
  for (int i = 0; i < cfg.dec_depth; ++i) rep.h_stage += flops_block(n, c, cfg.heads);
  rep.fusion = 2 * n * 2 * c * c;  // (N, 2C) @ (2C, C)
  rep.head = 2 * n * c * cin + 2 * c * 2 * c + 4 * n * c;

  int64_t common = rep.embedder + rep.f_stage + rep.h_stage + rep.fusion + rep.head;
  rep.dense_forward = common + rep.g_stage_dense;
  rep.sparse_forward = common + rep.g_stage_sparse;
  rep.pdg_uncond_forward = common;
  rep.cfg_step = 2 * rep.dense_forward;
  rep.pdg_step = rep.dense_forward + rep.pdg_uncond_forward;
  return rep;
}

}  // namespace sprint
