// SPDX-License-Identifier: Apache-2.0
#include "dualfield/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dualfield {

double StepSchedule::operator()(int iter) const {
  if (iter < 0) throw std::invalid_argument("schedule: negative iteration");
  if (iter < first_decay) return 1.0;
  if (iter < second_decay) return factor;
  return factor * factor;
}

double AdamConfig::base_lr(ad::Group g) const {
  switch (g) {
    case ad::Group::mlp: return lr_mlp;
    case ad::Group::grid: return lr_grid;
    case ad::Group::pose: return lr_pose;
  }
  throw std::invalid_argument("unknown parameter group");
}

Adam::Adam(std::vector<ad::Parameter*> params, AdamConfig config, StepSchedule schedule)
    : params_(std::move(params)), config_(config), schedule_(schedule) {
  if (schedule_.second_decay < schedule_.first_decay)
    throw std::invalid_argument("schedule: second decay precedes the first");
  slots_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i]->value.size(), 0.0);
    slots_[i].v.assign(params_[i]->value.size(), 0.0);
  }
}

void Adam::step(int iter) {
  const double mult = schedule_(iter);
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    AdamSlot& s = slots_[i];
    if (s.m.size() != p.value.size()) throw std::logic_error("adam: moment shape mismatch for " + p.name());
    const bool finite =
        std::all_of(p.grad.begin(), p.grad.end(), [](double g) { return std::isfinite(g); });
    if (!finite) {
      ++skipped_;
      p.zero_grad();
      continue;
    }
    ++s.step;
    const double lr = config_.base_lr(p.group()) * mult;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      s.m[k] = b1 * s.m[k] + (1.0 - b1) * g;
      s.v[k] = b2 * s.v[k] + (1.0 - b2) * g * g;
      p.value[k] -= lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + config_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace dualfield
