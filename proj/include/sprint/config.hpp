#pragma once

#include <cstdint>
#include <string>

#include "sprint/dataset.hpp"
#include "sprint/net.hpp"
#include "sprint/sample.hpp"
#include "sprint/train.hpp"

namespace sprint {

// One flat key = value document configures a whole run. Every key has a
// default; unknown keys are rejected. '#' starts a comment. The environment
// variables SPRINT_SEED and SPRINT_OUT override their keys after parsing.
struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;  // 0 keeps the OpenMP default

  int image_size = 16;
  int image_channels = 1;

  BlobDatasetSpec data;   // seed filled from `seed` unless data.seed is set
  bool data_seed_set = false;

  ModelConfig model;      // grid derived from image_size / patch
  TrainConfig train;

  int64_t sample_steps = 50;
  double sample_w = 2.0;
  GuidanceMode sample_mode = GuidanceMode::pdg;
  int64_t sample_count = 400;

  int64_t ckpt_every = 1000;

  void validate() const;
};

// Parses `key = value` lines. Throws std::invalid_argument naming the first
// unknown key or malformed value.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// The documented defaults as a config document (round-trips through the
// parser).
std::string default_config_text();

// Serializes a resolved config back to the flat document form.
std::string config_text(const RunConfig& cfg);

}  // namespace sprint
