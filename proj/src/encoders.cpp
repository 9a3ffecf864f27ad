// SPDX-License-Identifier: Apache-2.0
#include "dualfield/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>

namespace dualfield {

namespace {

// One level's contribution for one query point.
// Filled in full by locate().
struct CornerSample {
  std::array<std::uint32_t, 8> rows;
  std::array<double, 3> frac;
  std::array<bool, 3> free_axis;
};

inline double corner_weight(const std::array<double, 3>& f, int c) {
  const double wx = (c & 1) ? f[0] : 1.0 - f[0];
  const double wy = (c & 2) ? f[1] : 1.0 - f[1];
  const double wz = (c & 4) ? f[2] : 1.0 - f[2];
  return wx * wy * wz;
}

// d(corner weight)/d(frac[axis]).
inline double corner_weight_derivative(const std::array<double, 3>& f, int c, int axis) {
  double d = 1.0;
  for (int a = 0; a < 3; ++a) {
    const bool hi = (c >> a) & 1;
    if (a == axis)
      d *= hi ? 1.0 : -1.0;
    else
      d *= hi ? f[a] : 1.0 - f[a];
  }
  return d;
}

// Splits lattice coordinate u (vertices 0..n-1) into a cell base and a
// fraction, clamping to the lattice. Returns false when clamping occurred.
inline bool split_coordinate(double u, std::uint32_t n, std::uint32_t& base, double& frac) {
  bool inside = true;
  const double hi = static_cast<double>(n - 1);
  if (u < 0.0) {
    u = 0.0;
    inside = false;
  } else if (u > hi) {
    u = hi;
    inside = false;
  }
  double fl = std::floor(u);
  if (fl > hi - 1.0) fl = hi - 1.0;
  base = static_cast<std::uint32_t>(fl);
  frac = u - fl;
  return inside;
}

struct LevelView {
  const ad::Parameter* table;
  double inv_cell;  // d(lattice coordinate)/d(world coordinate)
};

// Shared forward/backward for both grid flavors. `locate(n, level)` fills a
// CornerSample for point n.
template <std::size_t F>
inline void accumulate_corners(const CornerSample& cs, const double* table, double* o) {
  for (int c = 0; c < 8; ++c) {
    const double w = corner_weight(cs.frac, c);
    const double* row = table + static_cast<std::size_t>(cs.rows[c]) * F;
    for (std::size_t f = 0; f < F; ++f) o[f] += w * row[f];
  }
}

template <std::size_t F>
inline void scatter_corners(const CornerSample& cs, const double* g, double* grad) {
  for (int c = 0; c < 8; ++c) {
    const double w = corner_weight(cs.frac, c);
    double* row = grad + static_cast<std::size_t>(cs.rows[c]) * F;
    for (std::size_t f = 0; f < F; ++f) row[f] += w * g[f];
  }
}

template <typename Locate>
ad::Tensor interpolate_levels(ad::Tape& tape, ad::Tensor positions, std::vector<LevelView> views,
                              std::vector<ad::Parameter*> params, int features,
                              bool train_features, std::string_view name, Locate locate) {
  if (positions.cols() != 3)
    throw ad::ShapeError(std::string(name) + ": positions must be [N,3], got " +
                         ad::to_string(positions.shape()));
  const std::size_t n_points = positions.rows();
  const std::size_t n_levels = views.size();
  const std::size_t F = static_cast<std::size_t>(features);
  const std::size_t out_dim = n_levels * F;

  std::shared_ptr<CornerSample[]> samples(new CornerSample[n_points * n_levels]);
  std::vector<double> out(n_points * out_dim, 0.0);
  for (std::size_t n = 0; n < n_points; ++n) {
    for (std::size_t l = 0; l < n_levels; ++l) {
      CornerSample& cs = samples[n * n_levels + l];
      locate(n, l, cs);
      const double* table = views[l].table->value.data();
      double* o = out.data() + n * out_dim + l * F;
      switch (F) {
        case 2: accumulate_corners<2>(cs, table, o); break;
        case 4: accumulate_corners<4>(cs, table, o); break;
        default:
          for (int c = 0; c < 8; ++c) {
            const double w = corner_weight(cs.frac, c);
            const double* row = table + static_cast<std::size_t>(cs.rows[c]) * F;
            for (std::size_t f = 0; f < F; ++f) o[f] += w * row[f];
          }
      }
    }
  }

  auto backward = [samples, views, params, F, n_levels, out_dim, n_points,
                   train_features](const ad::BackwardContext& ctx) {
    const bool want_pos = !ctx.input_grads[0].empty();
    for (std::size_t n = 0; n < n_points; ++n) {
      for (std::size_t l = 0; l < n_levels; ++l) {
        const CornerSample& cs = samples[n * n_levels + l];
        const double* g = ctx.output_grad.data() + n * out_dim + l * F;
        if (train_features) {
          double* gt = params[l]->grad.data();
          switch (F) {
            case 2: scatter_corners<2>(cs, g, gt); break;
            case 4: scatter_corners<4>(cs, g, gt); break;
            default:
              for (int c = 0; c < 8; ++c) {
                const double w = corner_weight(cs.frac, c);
                double* row = gt + static_cast<std::size_t>(cs.rows[c]) * F;
                for (std::size_t f = 0; f < F; ++f) row[f] += w * g[f];
              }
          }
        }
        if (want_pos) {
          const double* table = views[l].table->value.data();
          for (int c = 0; c < 8; ++c) {
            const double* row = table + static_cast<std::size_t>(cs.rows[c]) * F;
            double dot = 0;
            for (std::size_t f = 0; f < F; ++f) dot += g[f] * row[f];
            if (dot == 0.0) continue;
            for (int a = 0; a < 3; ++a) {
              if (!cs.free_axis[a]) continue;
              ctx.input_grads[0][n * 3 + a] +=
                  dot * corner_weight_derivative(cs.frac, c, a) * views[l].inv_cell;
            }
          }
        }
      }
    }
  };
  return tape.custom(name, {positions}, {n_points, out_dim}, std::move(out), std::move(backward),
                     train_features);
}

void fill_uniform(std::vector<double>& v, double range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-range, range);
  for (double& x : v) x = dist(rng);
}

}  // namespace

DenseMultiGrid::DenseMultiGrid(const Box& box, const DenseGridConfig& config, std::uint64_t seed)
    : box_(box), features_(config.features_per_level) {
  if (config.cell_sizes.empty()) throw std::invalid_argument("dense grid needs at least one level");
  if ((box.extent().array() <= 0).any()) throw std::invalid_argument("dense grid box is empty");
  std::vector<double> cells = config.cell_sizes;
  std::sort(cells.begin(), cells.end(), std::greater<>());
  std::mt19937_64 rng(seed);
  const Vec3 extent = box.extent();
  for (std::size_t l = 0; l < cells.size(); ++l) {
    if (cells[l] <= 0) throw std::invalid_argument("dense grid cell size must be positive");
    Level level;
    level.cell_size = cells[l];
    std::size_t count = 1;
    for (int a = 0; a < 3; ++a) {
      const double cells_on_axis = std::ceil(extent[a] / cells[l] - 1e-9);
      level.dims[a] = static_cast<std::uint32_t>(std::max(1.0, cells_on_axis)) + 1;
      count *= level.dims[a];
    }
    level.features = ad::Parameter("dense.level" + std::to_string(l),
                                   {count, static_cast<std::size_t>(features_)}, ad::Group::grid);
    fill_uniform(level.features.value, config.init_range, rng);
    levels_.push_back(std::move(level));
  }
}

std::vector<ad::Parameter*> DenseMultiGrid::parameters() {
  std::vector<ad::Parameter*> out;
  for (Level& l : levels_) out.push_back(&l.features);
  return out;
}

ad::Tensor DenseMultiGrid::interpolate(ad::Tape& tape, ad::Tensor positions, bool train_features) {
  if (!initialized()) throw std::logic_error("dense grid is uninitialized");
  std::vector<LevelView> views;
  std::vector<ad::Parameter*> params;
  for (Level& l : levels_) {
    views.push_back({&l.features, 1.0 / l.cell_size});
    params.push_back(&l.features);
  }
  const auto pos = positions.values();
  auto locate = [&](std::size_t n, std::size_t li, CornerSample& cs) {
    const Level& level = levels_[li];
    std::array<std::uint32_t, 3> base{};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double u = (pos[n * 3 + a] - box_.min[a]) / level.cell_size;
      const bool ok = split_coordinate(u, level.dims[a], base[a], cs.frac[a]);
      cs.free_axis[a] = ok;
      inside = inside && ok;
    }
    if (!inside && li == 0) ++clamped_;
    const std::uint32_t nx = level.dims[0], ny = level.dims[1];
    for (int c = 0; c < 8; ++c) {
      const std::uint32_t x = base[0] + (c & 1), y = base[1] + ((c >> 1) & 1),
                          z = base[2] + ((c >> 2) & 1);
      cs.rows[c] = (z * ny + y) * nx + x;
    }
  };
  return interpolate_levels(tape, positions, std::move(views), std::move(params), features_,
                            train_features, "dense_grid", locate);
}

std::vector<double> DenseMultiGrid::query(const Vec3& x) {
  ad::Tape tape;
  auto t = interpolate(tape, tape.constant({1, 3}, {x[0], x[1], x[2]}), false);
  return {t.values().begin(), t.values().end()};
}

double growth_factor(const HashGridConfig& config) {
  if (config.levels < 2) return 1.0;
  return std::exp((std::log(static_cast<double>(config.max_resolution)) -
                   std::log(static_cast<double>(config.min_resolution))) /
                  static_cast<double>(config.levels - 1));
}

int level_resolution(const HashGridConfig& config, int level) {
  if (level < 0 || level >= config.levels)
    throw std::out_of_range("hash level " + std::to_string(level) + " out of range [0," +
                            std::to_string(config.levels) + ")");
  const double r = static_cast<double>(config.min_resolution) *
                   std::pow(growth_factor(config), static_cast<double>(level));
  // Guard against b^l landing a hair below an integer (R_max at the top level).
  return static_cast<int>(std::floor(r * (1.0 + 1e-12)));
}

std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z,
                           std::uint32_t table_size) {
  const std::uint32_t h = (x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u);
  if ((table_size & (table_size - 1)) == 0) return h & (table_size - 1);
  return h % table_size;
}

HashMultiGrid::HashMultiGrid(const Box& box, const HashGridConfig& config, std::uint64_t seed)
    : box_(box), scale_(box.max_extent()), config_(config) {
  if (config.levels < 1 || config.features_per_level < 1)
    throw std::invalid_argument("hash grid needs at least one level and one feature");
  if (config.log2_table_size < 1 || config.log2_table_size > 30)
    throw std::invalid_argument("hash table size must be 2^1..2^30");
  if ((box.extent().array() <= 0).any()) throw std::invalid_argument("hash grid box is empty");
  std::mt19937_64 rng(seed);
  const std::uint64_t table = std::uint64_t{1} << config.log2_table_size;
  for (int l = 0; l < config.levels; ++l) {
    Level level;
    level.resolution = level_resolution(config, l);
    const std::uint64_t side = static_cast<std::uint64_t>(level.resolution) + 1;
    const std::uint64_t lattice = side * side * side;
    level.dense = lattice <= table;
    const std::size_t rows = static_cast<std::size_t>(level.dense ? lattice : table);
    char name[32];
    std::snprintf(name, sizeof(name), "hash.level%02d", l);
    level.table = ad::Parameter(name, {rows, static_cast<std::size_t>(config.features_per_level)},
                                ad::Group::grid);
    fill_uniform(level.table.value, config.init_range, rng);
    levels_.push_back(std::move(level));
  }
}

std::vector<ad::Parameter*> HashMultiGrid::parameters() {
  std::vector<ad::Parameter*> out;
  for (Level& l : levels_) out.push_back(&l.table);
  return out;
}

std::uint32_t HashMultiGrid::row_index(int level, std::uint32_t x, std::uint32_t y,
                                       std::uint32_t z) const {
  const Level& lv = levels_[level];
  if (lv.dense) {
    const std::uint32_t side = static_cast<std::uint32_t>(lv.resolution) + 1;
    return (z * side + y) * side + x;
  }
  return spatial_hash(x, y, z, std::uint32_t{1} << config_.log2_table_size);
}

Vec3 HashMultiGrid::lattice_position(int level, const Vec3& x) const {
  return (x - box_.min) / scale_ * static_cast<double>(levels_[level].resolution);
}

std::array<std::uint32_t, 8> HashMultiGrid::touched_rows(int level, const Vec3& x) const {
  const Vec3 u = lattice_position(level, x);
  const auto side = static_cast<std::uint32_t>(levels_[level].resolution) + 1;
  std::array<std::uint32_t, 3> base{};
  for (int a = 0; a < 3; ++a) {
    double frac;
    split_coordinate(u[a], side, base[a], frac);
  }
  std::array<std::uint32_t, 8> rows{};
  for (int c = 0; c < 8; ++c)
    rows[c] = row_index(level, base[0] + (c & 1), base[1] + ((c >> 1) & 1),
                        base[2] + ((c >> 2) & 1));
  return rows;
}

ad::Tensor HashMultiGrid::interpolate(ad::Tape& tape, ad::Tensor positions, bool train_features) {
  if (!initialized()) throw std::logic_error("hash grid is uninitialized");
  std::vector<LevelView> views;
  std::vector<ad::Parameter*> params;
  for (Level& l : levels_) {
    views.push_back({&l.table, static_cast<double>(l.resolution) / scale_});
    params.push_back(&l.table);
  }
  const auto pos = positions.values();
  const Vec3 box_hi = (box_.max - box_.min) / scale_;
  auto locate = [&](std::size_t n, std::size_t li, CornerSample& cs) {
    const Level& level = levels_[li];
    const double res = static_cast<double>(level.resolution);
    const auto side = static_cast<std::uint32_t>(level.resolution) + 1;
    std::array<std::uint32_t, 3> base{};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      double p = (pos[n * 3 + a] - box_.min[a]) / scale_;
      bool ok = true;
      if (p < 0.0) {
        p = 0.0;
        ok = false;
      } else if (p > box_hi[a]) {
        p = box_hi[a];
        ok = false;
      }
      split_coordinate(p * res, side, base[a], cs.frac[a]);
      cs.free_axis[a] = ok;
      inside = inside && ok;
    }
    if (!inside && li == 0) ++clamped_;
    for (int c = 0; c < 8; ++c)
      cs.rows[c] = row_index(static_cast<int>(li), base[0] + (c & 1), base[1] + ((c >> 1) & 1),
                             base[2] + ((c >> 2) & 1));
  };
  return interpolate_levels(tape, positions, std::move(views), std::move(params),
                            config_.features_per_level, train_features, "hash_grid", locate);
}

std::vector<double> HashMultiGrid::query(const Vec3& x) {
  ad::Tape tape;
  auto t = interpolate(tape, tape.constant({1, 3}, {x[0], x[1], x[2]}), false);
  return {t.values().begin(), t.values().end()};
}

}  // namespace dualfield
