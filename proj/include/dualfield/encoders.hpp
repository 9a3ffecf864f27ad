// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dualfield/autodiff.hpp"
#include "dualfield/geometry.hpp"

// Multi-resolution feature grids queried by trilinear interpolation.
//
// DenseMultiGrid stores one regular vertex lattice per cell size and feeds the
// geometry decoders. HashMultiGrid follows the geometric resolution ladder
//   R_l = floor(R_min * b^l),  b = exp((ln R_max - ln R_min) / (L - 1))
// and stores each level either densely (when the vertex lattice fits in the
// table) or through a spatial hash; it feeds the color decoders.
namespace dualfield {

struct DenseGridConfig {
  // Any order; levels are stored and concatenated coarse-to-fine.
  std::vector<double> cell_sizes{0.03, 0.06, 0.24, 0.96};
  int features_per_level = 4;
  double init_range = 1e-4;
};

struct HashGridConfig {
  int levels = 16;
  int features_per_level = 2;
  int min_resolution = 16;
  int max_resolution = 2048;
  int log2_table_size = 19;
  double init_range = 1e-4;
};

class DenseMultiGrid {
 public:
  struct Level {
    double cell_size = 0;
    std::array<std::uint32_t, 3> dims{};  // vertices per axis
    ad::Parameter features;               // [nx*ny*nz, F]
  };

  DenseMultiGrid() = default;
  DenseMultiGrid(const Box& box, const DenseGridConfig& config, std::uint64_t seed);

  bool initialized() const { return !levels_.empty(); }
  const Box& box() const { return box_; }
  std::size_t output_dim() const { return levels_.size() * features_; }
  int features_per_level() const { return features_; }
  const std::vector<Level>& levels() const { return levels_; }
  std::vector<Level>& levels() { return levels_; }

  // positions [N,3] -> [N, levels*F]. Gradients flow into the touched vertex
  // features when train_features is set, and into positions when they require
  // one. Queries outside the box are clamped and counted.
  ad::Tensor interpolate(ad::Tape& tape, ad::Tensor positions, bool train_features);
  // Plain evaluation of a single point (no tape).
  std::vector<double> query(const Vec3& x);

  std::uint64_t clamped_queries() const { return clamped_; }
  std::vector<ad::Parameter*> parameters();

 private:
  Box box_;
  int features_ = 0;
  std::vector<Level> levels_;
  std::uint64_t clamped_ = 0;
};

// R_min * b^l floored; l must be in [0, levels).
int level_resolution(const HashGridConfig& config, int level);
double growth_factor(const HashGridConfig& config);
// Spatial hash of integer vertex coordinates, modulo table_size.
std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z,
                           std::uint32_t table_size);

class HashMultiGrid {
 public:
  struct Level {
    int resolution = 0;
    bool dense = false;     // direct indexing, collision free
    ad::Parameter table;    // [rows, F]
  };

  HashMultiGrid() = default;
  HashMultiGrid(const Box& box, const HashGridConfig& config, std::uint64_t seed);

  bool initialized() const { return !levels_.empty(); }
  const Box& box() const { return box_; }
  const HashGridConfig& config() const { return config_; }
  std::size_t output_dim() const { return levels_.size() * config_.features_per_level; }
  const std::vector<Level>& levels() const { return levels_; }
  std::vector<Level>& levels() { return levels_; }

  // Table row used by vertex (x,y,z) of a level.
  std::uint32_t row_index(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const;
  // Normalized lattice coordinates of a world point at a level.
  Vec3 lattice_position(int level, const Vec3& x) const;
  // The 8 table rows blended for a point at a level (corner order: bit 0 = x,
  // bit 1 = y, bit 2 = z).
  std::array<std::uint32_t, 8> touched_rows(int level, const Vec3& x) const;

  ad::Tensor interpolate(ad::Tape& tape, ad::Tensor positions, bool train_features);
  std::vector<double> query(const Vec3& x);

  std::uint64_t clamped_queries() const { return clamped_; }
  std::vector<ad::Parameter*> parameters();

 private:
  Box box_;
  double scale_ = 1;  // world meters per unit of normalized coordinate
  HashGridConfig config_;
  std::vector<Level> levels_;
  std::uint64_t clamped_ = 0;
};

}  // namespace dualfield
