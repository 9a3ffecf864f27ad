// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualfield/encoders.hpp"
#include "dualfield/fields.hpp"
#include "dualfield/losses.hpp"
#include "dualfield/optim.hpp"
#include "dualfield/renderer.hpp"

namespace dualfield {

struct TrainConfig {
  int rays_per_iter = 6144;
  int iters = 20000;
  std::uint64_t seed = 0;
  bool pose_refine = false;
  int pose_warmup = 200;
  int checkpoint_every = 5000;
  int eval_every = 500;
  int eval_frames = 4;
  int chunk_rays = 512;
  int log_every = 100;
};

struct MeshConfig {
  double voxel = 0.02;
  double cull_slack_voxels = 2.0;
};

struct EvalConfig {
  int samples = 100000;
  double threshold = 0.05;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DenseGridConfig dense;
  HashGridConfig hash;
  FieldConfig field;
  SamplingConfig sampling;
  LossWeights losses;
  AdamConfig adam;
  StepSchedule schedule;
  TrainConfig train;
  MeshConfig mesh;
  EvalConfig eval;

  // Checks ranges and cross-field consistency; throws std::invalid_argument.
  void validate() const;
  // Every key as "section.key = value", one per line, in a fixed order.
  std::string to_text() const;
  // Applies "section.key = value" lines; '#' starts a comment.
  void apply_text(const std::string& text);
  // Applies one "section.key=value" override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string origin;  // "published" or "chosen"
  std::string help;
};
std::vector<ConfigKeyInfo> config_keys();
std::string config_help();

RunConfig load_config(const std::string& path);

// Desk-scale settings for the single-core toy runs: fewer rays per
// iteration, a smaller hash table and a decay schedule scaled to iters.
RunConfig toy_config(int iters = 2000);

}  // namespace dualfield
