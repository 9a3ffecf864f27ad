// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dualfield/checkpoint.hpp"
#include "dualfield/config.hpp"
#include "dualfield/data.hpp"
#include "dualfield/fields.hpp"
#include "dualfield/optim.hpp"
#include "dualfield/poses.hpp"

namespace dualfield {

struct LossRecord {
  int iter = 0;
  std::string term;
  double value = 0;
};

struct RenderedView {
  Image color;         // density-branch color
  Image depth;         // density-branch z-depth
  Image depth_sdf;     // SDF-branch z-depth
  Image diffuse;       // view-independent color, density weights
  Image specular;      // view-dependent color, density weights
  Image raw;           // diffuse + specular before clamping
};

// Full-frame deterministic rendering.
RenderedView render_view(DualField& field, const Camera& camera, const Mat4& camera_to_world,
                         const SamplingConfig& sampling, int chunk_rays);

std::unique_ptr<DualField> build_field(const RunConfig& config, const Box& bounds);

class Trainer {
 public:
  Trainer(FrameSet data, RunConfig config);
  // Restores field, poses, optimizer state and iteration count.
  Trainer(FrameSet data, const Checkpoint& ckpt);

  // Runs iterations until `iters` have been completed in total.
  void run(int iters);
  void run() { run(config_.train.iters); }
  // One optimizer step; returns the total loss.
  double iterate();

  Checkpoint checkpoint() const;
  void write_loss_csv(const std::string& path) const;

  DualField& field() { return *field_; }
  PoseTable& poses() { return *poses_; }
  const FrameSet& data() const { return data_; }
  const Split& split() const { return split_; }
  const RunConfig& config() const { return config_; }
  int iteration() const { return iter_; }
  const std::vector<LossRecord>& losses() const { return losses_; }
  std::size_t skipped_updates() const;

  // Pose used to render validation frame `frame`: the dataset pose, corrected
  // by the adjacent training frame when poses are refined.
  Mat4 evaluation_pose(int frame) const;
  // Mean PSNR over up to `max_frames` validation frames.
  double validation_psnr(int max_frames);

  // Called after every checkpoint_every iterations with the current state.
  std::function<void(const Trainer&)> on_checkpoint;

 private:
  void init_optimizers();

  FrameSet data_;
  RunConfig config_;
  Split split_;
  std::unique_ptr<DualField> field_;
  std::unique_ptr<PoseTable> poses_;
  std::unique_ptr<Adam> adam_, pose_adam_;
  std::vector<LossRecord> losses_;
  int iter_ = 0;
};

}  // namespace dualfield
