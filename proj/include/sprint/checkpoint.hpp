#pragma once

#include <memory>
#include <string>

#include "sprint/train.hpp"

namespace sprint {

// Checkpoint layout: an ASCII magic line, the JSON header length in bytes on
// its own line, the JSON header (model config, step counters, rng state,
// parameter entry table), then one little-endian float32 blob holding the raw
// parameters, the EMA copy, and both Adam moments, in that order.
void save_checkpoint(const std::string& path, const TrainState& st);

std::unique_ptr<TrainState> load_checkpoint(const std::string& path);

}  // namespace sprint
