#include "nlos/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "nlos/parallel.hpp"

namespace nlos {

size_t ImplicitSurface::hit_count() const {
  size_t k = 0;
  for (const auto& c : cells) k += c.hit ? 1 : 0;
  return k;
}

std::vector<RaySample> ray_march(const VolumeGrid& v, const Vec3& origin,
                                 const Vec3& dir, double step) {
  if (step <= 0) throw std::invalid_argument("ray_march: step must be > 0");
  // Slab test for the volume bounding box.
  double t_enter = 0, t_exit = std::numeric_limits<double>::infinity();
  const double lo[3] = {v.origin.x, v.origin.y, v.origin.z};
  const double hi[3] = {v.origin.x + v.W * v.pitch.x, v.origin.y + v.H * v.pitch.y,
                        v.origin.z + v.D * v.pitch.z};
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return {};
      continue;
    }
    double t0 = (lo[a] - o[a]) / d[a];
    double t1 = (hi[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_exit <= t_enter) return {};
  std::vector<RaySample> out;
  const size_t i0 = t_enter <= 0.5 * step
                        ? 0
                        : static_cast<size_t>(std::ceil(t_enter / step - 0.5));
  for (size_t i = i0;; ++i) {
    const double di = (i + 0.5) * step;
    if (di > t_exit) break;
    const Vec3 p = origin + dir * di;
    if (!v.contains(p)) {
      if (!out.empty()) break;
      continue;
    }
    out.push_back({di, trilinear(v, p)});
  }
  return out;
}

std::optional<double> soft_depth(const std::vector<RaySample>& samples,
                                 double beta, double threshold) {
  if (beta <= 0) throw std::invalid_argument("soft_depth: beta must be > 0");
  if (samples.empty()) return std::nullopt;
  double max_i = samples[0].intensity;
  for (const auto& s : samples) max_i = std::max(max_i, s.intensity);
  if (max_i < threshold) return std::nullopt;
  double num = 0, den = 0;
  for (const auto& s : samples) {
    const double w = std::exp(beta * (s.intensity - max_i));
    num += w * s.d;
    den += w;
  }
  return num / den;
}

std::vector<NormalEstimate> estimate_normals(
    const std::vector<std::optional<double>>& depths, const HemisphereGrid& dirs,
    const Vec3& x_s) {
  const int n = dirs.n;
  if (static_cast<int>(depths.size()) != n * n)
    throw std::invalid_argument("estimate_normals: grid size mismatch");
  std::vector<NormalEstimate> out(depths.size());
  auto point = [&](int ix, int iy) {
    return x_s + dirs.at(ix, iy) * *depths[dirs.index(ix, iy)];
  };
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const int i = dirs.index(ix, iy);
      const Vec3 dir = dirs.dirs[i];
      NormalEstimate est{-dir, true};
      if (depths[i]) {
        const bool interior = ix > 0 && ix < n - 1 && iy > 0 && iy < n - 1;
        if (interior && depths[dirs.index(ix, iy + 1)] &&
            depths[dirs.index(ix, iy - 1)] && depths[dirs.index(ix + 1, iy)] &&
            depths[dirs.index(ix - 1, iy)]) {
          const Vec3 pn = point(ix, iy + 1);
          const Vec3 ps = point(ix, iy - 1);
          const Vec3 pe = point(ix + 1, iy);
          const Vec3 pw = point(ix - 1, iy);
          Vec3 n1 = cross(pe - pn, ps - pn);
          Vec3 n2 = cross(pw - ps, pn - ps);
          const double l1 = norm(n1), l2 = norm(n2);
          if (l1 > 1e-15 && l2 > 1e-15) {
            n1 = n1 / l1;
            n2 = n2 / l2;
            if (dot(n1, dir) > 0) n1 = -n1;
            if (dot(n2, dir) > 0) n2 = -n2;
            const Vec3 sum = n1 + n2;
            const double ls = norm(sum);
            if (ls > 1e-15) est = {sum / ls, false};
          }
        }
      }
      out[i] = est;
    }
  }
  return out;
}

ImplicitSurface extract_surface(const VolumeGrid& v, const WallGrid& wall,
                                const SceneConfig& cfg, double beta,
                                double threshold, const HitMask* frozen_hits) {
  const int n = cfg.hemisphere_resolution;
  const double step = cfg.effective_ray_step();
  ImplicitSurface G;
  G.num_sensors = static_cast<int>(wall.sensor_points.size());
  G.n = n;
  G.grid = hemisphere_grid(n, wall.wall_normal);
  G.cells.resize(static_cast<size_t>(G.num_sensors) * n * n);
  if (frozen_hits && frozen_hits->hit.size() != G.cells.size())
    throw std::invalid_argument("extract_surface: hit mask size mismatch");

  parallel_for(G.num_sensors, [&](size_t s) {
    const Vec3 x_s = wall.sensor_points[s];
    std::vector<std::optional<double>> depths(static_cast<size_t>(n) * n);
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const int i = G.grid.index(ix, iy);
        const auto samples = ray_march(v, x_s, G.grid.dirs[i], step);
        const double thr =
            frozen_hits
                ? (frozen_hits->hit[s * n * n + i] ? -std::numeric_limits<double>::infinity()
                                                   : std::numeric_limits<double>::infinity())
                : threshold;
        depths[i] = soft_depth(samples, beta, thr);
      }
    }
    const auto normals = estimate_normals(depths, G.grid, x_s);
    for (int i = 0; i < n * n; ++i) {
      SurfaceCell& c = G.cells[s * n * n + i];
      if (!depths[i]) {
        c = SurfaceCell{};
        continue;
      }
      c.hit = true;
      c.d = *depths[i];
      c.x_g = x_s + G.grid.dirs[i] * c.d;
      c.n_g = normals[i].n;
      c.fallback_normal = normals[i].fallback;
    }
  });
  return G;
}

double sample_albedo(const AlbedoGrid& g, const Vec3& x) {
  const double v = trilinear(g, x);
  return v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
}

void export_pointcloud(const ImplicitSurface& G, const AlbedoGrid& rho,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write PLY file: " + path);
  const size_t k = G.hit_count();
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << k << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "property double albedo\n";
  out << "end_header\n";
  char line[256];
  for (const auto& c : G.cells) {
    if (!c.hit) continue;
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                  c.x_g.x, c.x_g.y, c.x_g.z, c.n_g.x, c.n_g.y, c.n_g.z,
                  sample_albedo(rho, c.x_g));
    out << line;
  }
}

}  // namespace nlos
