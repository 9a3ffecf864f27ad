// SPDX-License-Identifier: Apache-2.0
#include "dualfield/poses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

namespace dualfield {

namespace {

Mat3 rot_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}
Mat3 rot_y(double a) {
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}
Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}
Mat3 drot_x(double a) {
  Mat3 r;
  r << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return r;
}
Mat3 drot_y(double a) {
  Mat3 r;
  r << -std::sin(a), 0, std::cos(a), 0, 0, 0, -std::cos(a), 0, -std::sin(a);
  return r;
}
Mat3 drot_z(double a) {
  Mat3 r;
  r << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return r;
}

void check_rigid(const Mat4& m, const char* what) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  if (!m.allFinite() || (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(m(3, 0)) + std::abs(m(3, 1)) + std::abs(m(3, 2)) + std::abs(m(3, 3) - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(what) + " is not a rigid transform");
  if (std::abs(r.determinant()) < 1e-12) throw std::invalid_argument(std::string(what) + " is singular");
}

}  // namespace

Mat3 euler_to_rotation(const Vec3& e) { return rot_z(e[2]) * rot_y(e[1]) * rot_x(e[0]); }

std::array<Mat3, 3> euler_rotation_jacobian(const Vec3& e) {
  const Mat3 rx = rot_x(e[0]), ry = rot_y(e[1]), rz = rot_z(e[2]);
  return {rz * ry * drot_x(e[0]), rz * drot_y(e[1]) * rx, drot_z(e[2]) * ry * rx};
}

Mat4 PoseParam::to_matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = euler_to_rotation(euler);
  m.topRightCorner<3, 1>() = translation;
  return m;
}

PoseParam PoseParam::from_matrix(const Mat4& m, int frame_id) {
  PoseParam p;
  const double s = std::clamp(-m(2, 0), -1.0, 1.0);
  p.euler[1] = std::asin(s);
  p.euler[0] = std::atan2(m(2, 1), m(2, 2));
  p.euler[2] = std::atan2(m(1, 0), m(0, 0));
  p.translation = m.topRightCorner<3, 1>();
  p.frame_id = frame_id;
  return p;
}

Mat4 rigid_inverse(const Mat4& m) {
  Mat4 inv = Mat4::Identity();
  const Mat3 rt = m.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * m.topRightCorner<3, 1>();
  return inv;
}

Mat4 pfa_calibrate(const Mat4& test_noisy, const Mat4& adjacent_noisy, const Mat4& adjacent_opt) {
  check_rigid(test_noisy, "test pose");
  check_rigid(adjacent_noisy, "adjacent pose");
  check_rigid(adjacent_opt, "optimized adjacent pose");
  const Mat4 align = adjacent_opt * rigid_inverse(adjacent_noisy);
  return align * test_noisy;
}

Mat4 interpolate_pose(const Mat4& a, const Mat4& b) {
  check_rigid(a, "first pose");
  check_rigid(b, "second pose");
  const Eigen::Quaterniond qa(Mat3(a.topLeftCorner<3, 3>()));
  const Eigen::Quaterniond qb(Mat3(b.topLeftCorner<3, 3>()));
  Mat4 out = Mat4::Identity();
  out.topLeftCorner<3, 3>() = qa.slerp(0.5, qb).normalized().toRotationMatrix();
  out.topRightCorner<3, 1>() = 0.5 * (a.topRightCorner<3, 1>() + b.topRightCorner<3, 1>());
  return out;
}

int adjacent_frame(int frame_id, std::span<const int> train_ids) {
  if (train_ids.empty()) throw std::invalid_argument("adjacent_frame: no training frames");
  int best = train_ids[0];
  int best_gap = std::abs(best - frame_id);
  for (int id : train_ids) {
    const int gap = std::abs(id - frame_id);
    if (gap < best_gap || (gap == best_gap && id > best)) {
      best = id;
      best_gap = gap;
    }
  }
  return best;
}

PoseTable::PoseTable(std::span<const Mat4> initial)
    : param_("poses", {initial.size(), 6}, ad::Group::pose) {
  for (std::size_t f = 0; f < initial.size(); ++f) set(f, initial[f]);
}

PoseParam PoseTable::pose(std::size_t frame) const {
  if (frame >= size()) throw std::out_of_range("pose frame " + std::to_string(frame));
  PoseParam p;
  const double* row = param_.value.data() + frame * 6;
  p.euler = Vec3(row[0], row[1], row[2]);
  p.translation = Vec3(row[3], row[4], row[5]);
  p.frame_id = static_cast<int>(frame);
  return p;
}

void PoseTable::set(std::size_t frame, const Mat4& m) {
  if (frame >= size()) throw std::out_of_range("pose frame " + std::to_string(frame));
  check_rigid(m, "pose");
  const PoseParam p = PoseParam::from_matrix(m);
  double* row = param_.value.data() + frame * 6;
  for (int a = 0; a < 3; ++a) {
    row[a] = p.euler[a];
    row[3 + a] = p.translation[a];
  }
}

PosedRays pose_rays(ad::Tensor table, std::span<const std::uint32_t> frame_of_ray,
                    std::span<const Vec3> camera_dirs) {
  if (table.cols() != 6) throw ad::ShapeError("pose_rays: pose table must be [F,6]");
  const std::size_t r = frame_of_ray.size();
  if (camera_dirs.size() != r) throw ad::ShapeError("pose_rays: one camera direction per ray");
  const std::size_t frames = table.rows();
  const auto tv = table.values();
  auto unit = std::make_shared<std::vector<Vec3>>(r);
  std::vector<double> origins(r * 3), dirs(r * 3);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t f = frame_of_ray[i];
    if (f >= frames) throw std::out_of_range("pose_rays: frame index " + std::to_string(f));
    const double n = camera_dirs[i].norm();
    if (!(n > 0)) throw std::invalid_argument("pose_rays: zero camera direction");
    (*unit)[i] = camera_dirs[i] / n;
    const Vec3 e(tv[f * 6], tv[f * 6 + 1], tv[f * 6 + 2]);
    const Vec3 d = euler_to_rotation(e) * (*unit)[i];
    for (int a = 0; a < 3; ++a) {
      origins[i * 3 + a] = tv[f * 6 + 3 + a];
      dirs[i * 3 + a] = d[a];
    }
  }
  std::vector<std::uint32_t> frames_copy(frame_of_ray.begin(), frame_of_ray.end());
  ad::Tape& tape = *table.tape();
  auto origin_t = tape.custom(
      "pose_origin", {table}, {r, 3}, std::move(origins),
      [frames_copy](const ad::BackwardContext& ctx) {
        auto g = ctx.input_grads[0];
        if (g.empty()) return;
        for (std::size_t i = 0; i < frames_copy.size(); ++i)
          for (int a = 0; a < 3; ++a) g[frames_copy[i] * 6 + 3 + a] += ctx.output_grad[i * 3 + a];
      });
  auto dir_t = tape.custom(
      "pose_direction", {table}, {r, 3}, std::move(dirs),
      [frames_copy = std::move(frames_copy), unit](const ad::BackwardContext& ctx) {
        auto g = ctx.input_grads[0];
        if (g.empty()) return;
        const auto tv = ctx.inputs[0];
        for (std::size_t i = 0; i < frames_copy.size(); ++i) {
          const std::size_t f = frames_copy[i];
          const Vec3 e(tv[f * 6], tv[f * 6 + 1], tv[f * 6 + 2]);
          const Vec3 go(ctx.output_grad[i * 3], ctx.output_grad[i * 3 + 1], ctx.output_grad[i * 3 + 2]);
          const auto jac = euler_rotation_jacobian(e);
          for (int k = 0; k < 3; ++k) g[f * 6 + k] += go.dot(jac[k] * (*unit)[i]);
        }
      });
  return {origin_t, dir_t};
}

}  // namespace dualfield
