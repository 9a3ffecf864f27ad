// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <limits>
#include <optional>
#include <utility>

namespace dualfield {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Axis-aligned box in world meters.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double max_extent() const { return extent().maxCoeff(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Box expanded(double margin) const {
    return {min - Vec3::Constant(margin), max + Vec3::Constant(margin)};
  }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(min).cwiseMin(max); }

  // Slab test; returns the parametric entry/exit distances (entry may be
  // negative when the origin is inside).
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const;
};

inline std::optional<std::pair<double, double>> Box::intersect(const Vec3& origin,
                                                               const Vec3& dir) const {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < min[a] || origin[a] > max[a]) return std::nullopt;
      continue;
    }
    double ta = (min[a] - origin[a]) / dir[a];
    double tb = (max[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;
  return std::make_pair(t0, t1);
}

}  // namespace dualfield
