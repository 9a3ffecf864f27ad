// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dualfield/geometry.hpp"
#include "dualfield/renderer.hpp"

namespace dualfield {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> normals;  // per vertex, may be empty

  bool empty() const { return triangles.empty(); }
  double triangle_area(std::size_t t) const;
  // Edge -> incident face count; true when every edge has exactly two faces.
  bool watertight() const;
};

// Batched scalar field: one value per point.
using ScalarField = std::function<std::vector<double>(std::span<const Vec3>)>;

// Marching cubes over the grid min + voxel * (i, j, k) covering box. Corners
// with value <= 0 count as inside; triangles face toward positive values.
TriangleMesh extract_mesh(const ScalarField& field, const Box& box, double voxel);
TriangleMesh extract_mesh(DualField& field, double voxel);

struct ObservedFrame {
  Camera camera;
  Mat4 camera_to_world = Mat4::Identity();
  std::span<const double> depth;  // z-depth per pixel, row-major; <= 0 means missing
};

// Keeps faces with at least one vertex seen by some frame within depth +
// slack; drops unreferenced vertices.
TriangleMesh cull_unobserved(const TriangleMesh& mesh, std::span<const ObservedFrame> frames,
                             double slack);

void write_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh read_obj(const std::string& path);

}  // namespace dualfield
