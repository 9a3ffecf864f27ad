// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dualfield/geometry.hpp"
#include "dualfield/image_io.hpp"
#include "dualfield/meshing.hpp"

namespace dualfield {

// +inf for identical images.
double psnr(const Image& a, const Image& b);
// Mean SSIM of the luma channel, 11x11 Gaussian window with sigma 1.5.
double ssim(const Image& a, const Image& b);

// Static 3-d tree over a point set; exact nearest neighbor queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);
  // Index of the nearest point and its distance. Ties go to the lower index.
  std::pair<std::size_t, double> nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    int axis;                  // -1 for leaves
    double split;
    std::int32_t left, right;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

std::pair<std::size_t, double> brute_force_nearest(std::span<const Vec3> points, const Vec3& q);

struct SurfaceSamples {
  std::vector<Vec3> points, normals;
};
// Area-weighted uniform samples with face normals.
SurfaceSamples sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

struct GeometryReport {
  double acc = 0, comp = 0, chamfer_l1 = 0, nc = 0, precision = 0, recall = 0, fscore = 0;
  double threshold = 0.05;

  std::string to_text() const;
};

GeometryReport geometry_metrics(const TriangleMesh& pred, const TriangleMesh& gt,
                                std::size_t samples = 100000, double threshold = 0.05,
                                std::uint64_t seed = 0);

// Formats a double, writing "inf"/"-inf"/"nan" for non-finite values.
std::string format_metric(double v);

}  // namespace dualfield
