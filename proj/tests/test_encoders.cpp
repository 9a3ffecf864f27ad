// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualfield/encoders.hpp"

using namespace dualfield;

namespace {

Box unit_box() { return {Vec3(-1, -1, -1), Vec3(1, 1, 1)}; }

// Sets every feature of every level to `v`.
template <typename Grid>
void fill_tables(Grid& g, double v) {
  for (auto* p : g.parameters()) std::fill(p->value.begin(), p->value.end(), v);
}

}  // namespace

TEST(HashGrid, ResolutionLadder) {
  HashGridConfig cfg;
  EXPECT_EQ(level_resolution(cfg, 0), 16);
  EXPECT_EQ(level_resolution(cfg, 15), 2048);
  EXPECT_NEAR(growth_factor(cfg), 1.38191, 1e-5);
  for (int l = 1; l < cfg.levels; ++l) EXPECT_GT(level_resolution(cfg, l), level_resolution(cfg, l - 1));
  EXPECT_THROW(level_resolution(cfg, 16), std::out_of_range);
  EXPECT_THROW(level_resolution(cfg, -1), std::out_of_range);
}

TEST(HashGrid, ConstantTableGivesConstantFeatures) {
  HashGridConfig cfg{4, 2, 4, 32, 10, 1e-4};
  HashMultiGrid g(unit_box(), cfg, 1);
  fill_tables(g, 0.25);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const auto f = g.query(Vec3(u(rng), u(rng), u(rng)));
    ASSERT_EQ(f.size(), 8u);
    for (double v : f) EXPECT_NEAR(v, 0.25, 1e-12);
  }
}

TEST(HashGrid, CoarseLevelsAreDenseAndFineLevelsHash) {
  HashGridConfig cfg{4, 2, 4, 64, 12, 1e-4};
  HashMultiGrid g(unit_box(), cfg, 1);
  EXPECT_TRUE(g.levels()[0].dense);
  EXPECT_FALSE(g.levels()[3].dense);
  EXPECT_EQ(g.levels()[3].table.shape().rows, 4096u);
  EXPECT_LT(spatial_hash(7, 9, 11, 4096), 4096u);
  EXPECT_EQ(spatial_hash(7, 9, 11, 4096), spatial_hash(7, 9, 11, 4096));
  EXPECT_EQ(spatial_hash(5, 6, 7, 1000), ((5u) ^ (6u * 2654435761u) ^ (7u * 805459861u)) % 1000u);
}

TEST(HashGrid, TouchedRowsMatchRowIndex) {
  HashGridConfig cfg{3, 2, 4, 16, 8, 1e-4};
  HashMultiGrid g(unit_box(), cfg, 1);
  const Vec3 x(0.1, -0.3, 0.77);
  for (int l = 0; l < 3; ++l) {
    const Vec3 u = g.lattice_position(l, x);
    const auto rows = g.touched_rows(l, x);
    for (int c = 0; c < 8; ++c) {
      const auto bx = static_cast<std::uint32_t>(std::floor(u[0])) + (c & 1);
      const auto by = static_cast<std::uint32_t>(std::floor(u[1])) + ((c >> 1) & 1);
      const auto bz = static_cast<std::uint32_t>(std::floor(u[2])) + ((c >> 2) & 1);
      EXPECT_EQ(rows[c], g.row_index(l, bx, by, bz));
    }
  }
}

TEST(DenseGrid, PartitionOfUnity) {
  DenseGridConfig cfg{{0.5, 0.3}, 3, 1e-4};
  DenseMultiGrid g(unit_box(), cfg, 4);
  fill_tables(g, 1.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 500; ++i) {
    const auto f = g.query(Vec3(u(rng), u(rng), u(rng)));
    for (double v : f) ASSERT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(DenseGrid, CellCenterIsCornerMean) {
  DenseGridConfig cfg{{0.5}, 2, 1.0};
  DenseMultiGrid g(unit_box(), cfg, 9);
  const auto& level = g.levels()[0];
  const auto& table = level.features.value;
  std::array<double, 2> mean{};
  for (int c = 0; c < 8; ++c) {
    const std::uint32_t x = 1 + (c & 1), y = 0 + ((c >> 1) & 1), z = 2 + ((c >> 2) & 1);
    const std::size_t row = (z * level.dims[1] + y) * level.dims[0] + x;
    for (int f = 0; f < 2; ++f) mean[f] += table[row * 2 + f] / 8.0;
  }
  // Center of cell (1, 0, 2).
  const Vec3 query = unit_box().min + Vec3(1.5, 0.5, 2.5) * 0.5;
  const auto got = g.query(query);
  EXPECT_NEAR(got[0], mean[0], 1e-12);
  EXPECT_NEAR(got[1], mean[1], 1e-12);
}

TEST(DenseGrid, VertexQueryReturnsStoredFeature) {
  DenseGridConfig cfg{{0.5}, 1, 1.0};
  DenseMultiGrid g(unit_box(), cfg, 11);
  const auto& level = g.levels()[0];
  const std::size_t row = (2 * level.dims[1] + 1) * level.dims[0] + 3;
  EXPECT_NEAR(g.query(Vec3(-1 + 1.5, -1 + 0.5, -1 + 1.0))[0], level.features.value[row], 1e-12);
}

TEST(DenseGrid, OutsideQueriesClampAndCount) {
  DenseGridConfig cfg{{0.5}, 1, 1.0};
  DenseMultiGrid g(unit_box(), cfg, 11);
  const auto inside = g.query(Vec3(1, 1, 1));
  const auto outside = g.query(Vec3(3, 2, 1.5));
  EXPECT_DOUBLE_EQ(inside[0], outside[0]);
  EXPECT_EQ(g.clamped_queries(), 1u);
}

TEST(DenseGrid, LevelsOrderedCoarseToFine) {
  DenseGridConfig cfg;
  DenseMultiGrid g(unit_box(), cfg, 1);
  ASSERT_EQ(g.levels().size(), 4u);
  EXPECT_DOUBLE_EQ(g.levels()[0].cell_size, 0.96);
  EXPECT_DOUBLE_EQ(g.levels()[3].cell_size, 0.03);
  EXPECT_EQ(g.output_dim(), 16u);
}

TEST(Grids, RejectBadInput) {
  DenseMultiGrid g(unit_box(), DenseGridConfig{{0.5}, 1, 1.0}, 1);
  ad::Tape tape;
  EXPECT_THROW(g.interpolate(tape, tape.constant({2, 2}, {0, 0, 0, 0}), false), ad::ShapeError);
  EXPECT_THROW(DenseMultiGrid(Box{Vec3::Zero(), Vec3::Zero()}, DenseGridConfig{}, 1), std::invalid_argument);
  HashGridConfig bad;
  bad.levels = 0;
  EXPECT_THROW(HashMultiGrid(unit_box(), bad, 1), std::invalid_argument);
}
