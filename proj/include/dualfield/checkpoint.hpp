// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualfield/autodiff.hpp"
#include "dualfield/geometry.hpp"

namespace dualfield {

struct TensorRecord {
  std::string name;
  ad::Group group = ad::Group::mlp;
  ad::Shape shape;
  std::vector<double> value;
  // Optimizer state; empty when the tensor was not being optimized.
  std::vector<double> m, v;
  std::int64_t step = 0;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::int64_t iteration = 0;  // iterations completed
  Box bounds;
  std::vector<TensorRecord> tensors;

  const TensorRecord& tensor(const std::string& name) const;
  const TensorRecord* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dualfield
