// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualfield/autodiff.hpp"

namespace dualfield {

struct StepSchedule {
  int first_decay = 10000;
  int second_decay = 15000;
  double factor = 1.0 / 3.0;

  // 1 before first_decay, factor until second_decay, factor^2 after.
  double operator()(int iter) const;
};

struct AdamConfig {
  double lr_mlp = 1e-3;
  double lr_grid = 1e-2;
  double lr_pose = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  double base_lr(ad::Group g) const;
};

struct AdamSlot {
  std::vector<double> m, v;
  long step = 0;
};

class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, AdamConfig config = {}, StepSchedule schedule = {});

  // Applies one update from the gradients currently stored in each parameter
  // and zeroes them. A parameter with any non-finite gradient entry is skipped
  // and counted.
  void step(int iter);

  const AdamConfig& config() const { return config_; }
  const StepSchedule& schedule() const { return schedule_; }
  std::size_t skipped() const { return skipped_; }
  std::span<const ad::Parameter* const> parameters() const { return params_; }

  std::vector<AdamSlot>& slots() { return slots_; }
  const std::vector<AdamSlot>& slots() const { return slots_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<AdamSlot> slots_;
  AdamConfig config_;
  StepSchedule schedule_;
  std::size_t skipped_ = 0;
};

}  // namespace dualfield
