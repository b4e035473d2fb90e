#pragma once

#include <map>
#include <string>

#include "sprint/config.hpp"
#include "sprint/train.hpp"

namespace sprint {

struct PipelineResult {
  std::string out_dir;
  std::string final_checkpoint;
  std::map<std::string, double> accuracy;  // guidance mode -> quadrant accuracy
  double loss_first50_avg = 0.0;
  double loss_final = 0.0;
};

// Full run: pretrain, finetune, sample each guidance mode with the EMA
// weights, evaluate, and write metrics.ndjson, timings.ndjson, checkpoints,
// sample arrays, and summary.json under cfg.out_dir. A phase with zero
// iterations is skipped. `resume` continues from a checkpoint written by an
// identical config.
PipelineResult run_pipeline(const RunConfig& cfg, const std::string& resume = "");

// Finetune phase only, starting from a checkpoint. Writes metrics and the
// final checkpoint, no sampling.
PipelineResult run_finetune_phase(const RunConfig& cfg, const std::string& from_ckpt);

}  // namespace sprint
