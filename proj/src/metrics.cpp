// SPDX-License-Identifier: Apache-2.0
#include "dualfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dualfield {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
  if (a.data.empty()) throw std::invalid_argument(std::string(what) + ": empty image");
}

std::vector<double> luma(const Image& img) {
  std::vector<double> out(img.pixels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (img.channels == 1) {
      out[i] = img.data[i];
    } else {
      const double* p = img.data.data() + i * img.channels;
      out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
  check_same(a, b, "ssim");
  constexpr int kWin = 11, kHalf = 5;
  constexpr double kSigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  if (a.width < kWin || a.height < kWin) throw std::invalid_argument("ssim: image smaller than window");
  double kernel[kWin];
  double ksum = 0;
  for (int i = 0; i < kWin; ++i) {
    kernel[i] = std::exp(-0.5 * (i - kHalf) * (i - kHalf) / (kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const auto x = luma(a), y = luma(b);
  const int w = a.width, h = a.height;
  // Separable filtering of x, y, x^2, y^2, xy over valid windows only.
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  auto filter = [&](auto value) {
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = 0;
        for (int k = 0; k < kWin; ++k) s += kernel[k] * value(static_cast<std::size_t>(r) * w + c + k);
        rows[static_cast<std::size_t>(r) * ow + c] = s;
      }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = 0;
        for (int k = 0; k < kWin; ++k) s += kernel[k] * rows[static_cast<std::size_t>(r + k) * ow + c];
        out[static_cast<std::size_t>(r) * ow + c] = s;
      }
    return out;
  };
  const auto mx = filter([&](std::size_t i) { return x[i]; });
  const auto my = filter([&](std::size_t i) { return y[i]; });
  const auto sxx = filter([&](std::size_t i) { return x[i] * x[i]; });
  const auto syy = filter([&](std::size_t i) { return y[i] * y[i]; });
  const auto sxy = filter([&](std::size_t i) { return x[i] * y[i]; });
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.size() >= std::numeric_limits<std::uint32_t>::max())
    throw std::length_error("KdTree: too many points");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  constexpr std::uint32_t kLeaf = 8;
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= kLeaf) return id;
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::int32_t node, const Vec3& q, std::size_t& best, double& best_d2) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t p = order_[i];
      const double d2 = (points_[p] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && p < best)) {
        best_d2 = d2;
        best = p;
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t near = diff < 0 ? n.left : n.right;
  const std::int32_t far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::logic_error("KdTree: empty point set");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, q, best, best_d2);
  return {best, std::sqrt(best_d2)};
}

std::pair<std::size_t, double> brute_force_nearest(std::span<const Vec3> points, const Vec3& q) {
  if (points.empty()) throw std::logic_error("brute_force_nearest: empty point set");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return {best, std::sqrt(best_d2)};
}

SurfaceSamples sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  SurfaceSamples out;
  if (mesh.triangles.empty() || count == 0) return out;
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cdf[t] = total;
  }
  if (!(total > 0)) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  out.points.reserve(count);
  out.normals.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = uni(rng) * total;
    std::size_t t = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    t = std::min(t, cdf.size() - 1);
    const auto& f = mesh.triangles[t];
    double u = uni(rng), v = uni(rng);
    if (u + v > 1) {
      u = 1 - u;
      v = 1 - v;
    }
    const Vec3 &a = mesh.vertices[f[0]], &b = mesh.vertices[f[1]], &c = mesh.vertices[f[2]];
    out.points.push_back(a + u * (b - a) + v * (c - a));
    out.normals.push_back((b - a).cross(c - a).normalized());
  }
  return out;
}

GeometryReport geometry_metrics(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t samples,
                                double threshold, std::uint64_t seed) {
  GeometryReport rep;
  rep.threshold = threshold;
  const auto ps = sample_surface(pred, samples, seed);
  const auto gs = sample_surface(gt, samples, seed);
  if (ps.points.empty() || gs.points.empty()) {
    const double inf = std::numeric_limits<double>::infinity();
    rep.acc = rep.comp = rep.chamfer_l1 = inf;
    rep.nc = rep.precision = rep.recall = rep.fscore = 0;
    return rep;
  }
  const KdTree gt_tree(gs.points), pred_tree(ps.points);
  auto one_way = [&](const SurfaceSamples& from, const SurfaceSamples& to, const KdTree& tree,
                     double& mean_dist, double& mean_nc, double& within) {
    double d = 0, nc = 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < from.points.size(); ++i) {
      const auto [j, dist] = tree.nearest(from.points[i]);
      d += dist;
      nc += std::abs(from.normals[i].dot(to.normals[j]));
      hit += dist < threshold;
    }
    const auto n = static_cast<double>(from.points.size());
    mean_dist = d / n;
    mean_nc = nc / n;
    within = static_cast<double>(hit) / n;
  };
  double nc_a = 0, nc_c = 0;
  one_way(ps, gs, gt_tree, rep.acc, nc_a, rep.precision);
  one_way(gs, ps, pred_tree, rep.comp, nc_c, rep.recall);
  rep.chamfer_l1 = 0.5 * (rep.acc + rep.comp);
  rep.nc = 0.5 * (nc_a + nc_c);
  rep.fscore = rep.precision + rep.recall > 0
                   ? 2 * rep.precision * rep.recall / (rep.precision + rep.recall)
                   : 0.0;
  return rep;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

std::string GeometryReport::to_text() const {
  std::ostringstream s;
  s << "acc = " << format_metric(acc) << '\n'
    << "comp = " << format_metric(comp) << '\n'
    << "chamfer_l1 = " << format_metric(chamfer_l1) << '\n'
    << "nc = " << format_metric(nc) << '\n'
    << "precision = " << format_metric(precision) << '\n'
    << "recall = " << format_metric(recall) << '\n'
    << "fscore = " << format_metric(fscore) << '\n'
    << "threshold = " << format_metric(threshold) << '\n';
  return s.str();
}

}  // namespace dualfield
