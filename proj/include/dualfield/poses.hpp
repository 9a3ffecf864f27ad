// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dualfield/autodiff.hpp"
#include "dualfield/geometry.hpp"

namespace dualfield {

// Rotation R = Rz(gamma) * Ry(beta) * Rx(alpha) with euler = (alpha, beta, gamma).
struct PoseParam {
  Vec3 euler = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  int frame_id = -1;

  Mat4 to_matrix() const;
  static PoseParam from_matrix(const Mat4& m, int frame_id = -1);
};

Mat3 euler_to_rotation(const Vec3& euler);
// Partial derivatives of euler_to_rotation with respect to each angle.
std::array<Mat3, 3> euler_rotation_jacobian(const Vec3& euler);

// A' = P_adj_opt * P_adj^-1, returns A' * P_test.
Mat4 pfa_calibrate(const Mat4& test_noisy, const Mat4& adjacent_noisy, const Mat4& adjacent_opt);

// Interpolation baseline: mean translation and slerp(0.5) rotation.
Mat4 interpolate_pose(const Mat4& a, const Mat4& b);

// Nearest training frame by index, ties toward the later frame. Throws when
// train_ids is empty.
int adjacent_frame(int frame_id, std::span<const int> train_ids);

Mat4 rigid_inverse(const Mat4& m);

// Learnable per-frame poses stored as a [frames, 6] parameter (euler, translation).
class PoseTable {
 public:
  PoseTable() = default;
  explicit PoseTable(std::span<const Mat4> initial);

  std::size_t size() const { return param_.shape().rows; }
  PoseParam pose(std::size_t frame) const;
  Mat4 matrix(std::size_t frame) const { return pose(frame).to_matrix(); }
  void set(std::size_t frame, const Mat4& m);
  ad::Parameter& parameter() { return param_; }

 private:
  ad::Parameter param_;
};

// World-space ray origins and unit directions [R,3] each, differentiable with
// respect to the pose rows. camera_dirs holds one camera-space direction per ray.
struct PosedRays {
  ad::Tensor origins, directions;
};
PosedRays pose_rays(ad::Tensor pose_table, std::span<const std::uint32_t> frame_of_ray,
                    std::span<const Vec3> camera_dirs);

}  // namespace dualfield
