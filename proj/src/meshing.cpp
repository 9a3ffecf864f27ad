// SPDX-License-Identifier: Apache-2.0
#include "dualfield/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "dualfield/marching_cubes_tables.hpp"

namespace dualfield {

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& f = triangles[t];
  return 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
}

bool TriangleMesh::watertight() const {
  if (triangles.empty()) return false;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
  for (const auto& f : triangles)
    for (int e = 0; e < 3; ++e) {
      auto a = f[e], b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  for (const auto& [edge, n] : count)
    if (n != 2) return false;
  return true;
}

namespace {

void finite_difference_normals(const ScalarField& field, std::span<const Vec3> at, double h,
                               std::vector<Vec3>& out) {
  std::vector<Vec3> probes;
  probes.reserve(at.size() * 6);
  for (const Vec3& p : at)
    for (int a = 0; a < 3; ++a) {
      Vec3 d = Vec3::Zero();
      d[a] = h;
      probes.push_back(p + d);
      probes.push_back(p - d);
    }
  const auto v = field(probes);
  out.resize(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    Vec3 g;
    for (int a = 0; a < 3; ++a) g[a] = v[i * 6 + 2 * a] - v[i * 6 + 2 * a + 1];
    const double n = g.norm();
    out[i] = n > 0 ? Vec3(g / n) : Vec3::Zero();
  }
}

}  // namespace

TriangleMesh extract_mesh(const ScalarField& field, const Box& box, double voxel) {
  if (!(voxel > 0)) throw std::invalid_argument("extract_mesh: voxel must be positive");
  std::array<std::size_t, 3> dims{};
  for (int a = 0; a < 3; ++a)
    dims[a] = static_cast<std::size_t>(std::ceil(box.extent()[a] / voxel - 1e-9)) + 1;
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  auto linear = [&](std::size_t i, std::size_t j, std::size_t k) { return (k * ny + j) * nx + i; };
  auto position = [&](std::size_t i, std::size_t j, std::size_t k) {
    return Vec3(box.min[0] + voxel * static_cast<double>(i), box.min[1] + voxel * static_cast<double>(j),
                box.min[2] + voxel * static_cast<double>(k));
  };

  // Sample slab by slab to bound memory.
  std::vector<double> phi(nx * ny * nz);
  std::vector<Vec3> slab(nx * ny);
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) slab[j * nx + i] = position(i, j, k);
    const auto v = field(slab);
    if (v.size() != slab.size()) throw std::runtime_error("extract_mesh: field returned wrong count");
    std::copy(v.begin(), v.end(), phi.begin() + static_cast<std::ptrdiff_t>(k * nx * ny));
  }

  TriangleMesh mesh;
  // Vertex keys: 3 * grid index + axis for edge crossings, or a corner key
  // when the crossing lands exactly on a grid vertex.
  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of;
  const std::uint64_t corner_base = static_cast<std::uint64_t>(nx * ny * nz) * 3;
  auto vertex_on_edge = [&](std::size_t i, std::size_t j, std::size_t k, int e) {
    const auto c0 = mc::corner_offset[mc::edge_corners[e][0]];
    const auto c1 = mc::corner_offset[mc::edge_corners[e][1]];
    const std::size_t a0 = linear(i + c0[0], j + c0[1], k + c0[2]);
    const std::size_t a1 = linear(i + c1[0], j + c1[1], k + c1[2]);
    const double f0 = phi[a0], f1 = phi[a1];
    const double t = f0 == f1 ? 0.5 : f0 / (f0 - f1);
    std::uint64_t key;
    if (t <= 0.0) {
      key = corner_base + a0;
    } else if (t >= 1.0) {
      key = corner_base + a1;
    } else {
      const std::size_t lo = std::min(a0, a1);
      int axis = 0;
      for (int a = 0; a < 3; ++a)
        if (c0[a] != c1[a]) axis = a;
      key = static_cast<std::uint64_t>(lo) * 3 + static_cast<std::uint64_t>(axis);
    }
    auto it = vertex_of.find(key);
    if (it != vertex_of.end()) return it->second;
    const Vec3 p0 = position(i + c0[0], j + c0[1], k + c0[2]);
    const Vec3 p1 = position(i + c1[0], j + c1[1], k + c1[2]);
    const double tc = std::clamp(t, 0.0, 1.0);
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(p0 + tc * (p1 - p0));
    vertex_of.emplace(key, id);
    return id;
  };

  for (std::size_t k = 0; k + 1 < nz; ++k)
    for (std::size_t j = 0; j + 1 < ny; ++j)
      for (std::size_t i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = mc::corner_offset[c];
          if (phi[linear(i + o[0], j + o[1], k + o[2])] <= 0.0) cube |= 1 << c;
        }
        if (mc::edge_table[cube] == 0) continue;
        const auto& tris = mc::tri_table[cube];
        for (int t = 0; tris[t] != -1; t += 3) {
          std::array<std::uint32_t, 3> f{vertex_on_edge(i, j, k, tris[t]),
                                         vertex_on_edge(i, j, k, tris[t + 2]),
                                         vertex_on_edge(i, j, k, tris[t + 1])};
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
          mesh.triangles.push_back(f);
        }
      }

  finite_difference_normals(field, mesh.vertices, 0.25 * voxel, mesh.normals);
  return mesh;
}

TriangleMesh extract_mesh(DualField& field, double voxel) {
  return extract_mesh([&field](std::span<const Vec3> p) { return field.sdf_values(p); }, field.box(),
                      voxel);
}

TriangleMesh cull_unobserved(const TriangleMesh& mesh, std::span<const ObservedFrame> frames,
                             double slack) {
  std::vector<char> seen(mesh.vertices.size(), 0);
  for (const auto& frame : frames) {
    const Mat4 world_to_camera = frame.camera_to_world.inverse();
    const auto& cam = frame.camera;
    if (frame.depth.size() != static_cast<std::size_t>(cam.width) * cam.height)
      throw std::invalid_argument("cull_unobserved: depth map size mismatch");
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      if (seen[v]) continue;
      const Vec3 pc = (world_to_camera * mesh.vertices[v].homogeneous()).head<3>();
      const auto uv = cam.project(pc);
      if (!uv) continue;
      const double u = std::round((*uv)[0]), w = std::round((*uv)[1]);
      if (u < 0 || w < 0 || u >= cam.width || w >= cam.height) continue;
      const double d = frame.depth[static_cast<std::size_t>(w) * cam.width + static_cast<std::size_t>(u)];
      if (d > 0 && pc.z() <= d + slack) seen[v] = 1;
    }
  }
  TriangleMesh out;
  std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
  for (const auto& f : mesh.triangles) {
    if (!seen[f[0]] && !seen[f[1]] && !seen[f[2]]) continue;
    std::array<std::uint32_t, 3> g{};
    for (int c = 0; c < 3; ++c) {
      if (remap[f[c]] < 0) {
        remap[f[c]] = static_cast<std::int64_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[f[c]]);
        if (!mesh.normals.empty()) out.normals.push_back(mesh.normals[f[c]]);
      }
      g[c] = static_cast<std::uint32_t>(remap[f[c]]);
    }
    out.triangles.push_back(g);
  }
  return out;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  for (const auto& v : mesh.vertices) f << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) f << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!f) throw std::runtime_error("error writing " + path);
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::istringstream in(line);
    std::string tag;
    if (!(in >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(in >> v.x() >> v.y() >> v.z()))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        if (!(in >> tok)) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad face");
        const long i = std::stol(tok.substr(0, tok.find('/')));
        if (i < 1) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad index");
        idx = static_cast<std::uint32_t>(i - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  for (const auto& t : mesh.triangles)
    for (auto i : t)
      if (i >= mesh.vertices.size()) throw std::runtime_error(path + ": face index out of range");
  return mesh;
}

}  // namespace dualfield
