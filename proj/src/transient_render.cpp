#include "nlos/transient_render.hpp"

#include <cmath>
#include <stdexcept>

#include "nlos/parallel.hpp"

namespace nlos {

double tof(const PathSample& path, double c) {
  if (c <= 0) throw std::invalid_argument("tof: c must be > 0");
  return (norm(path.x_g - path.x_l) + norm(path.x_s - path.x_g)) / c;
}

double throughput(const PathSample& path) {
  const double d_lg = norm(path.x_g - path.x_l);
  const double d_gs = norm(path.x_s - path.x_g);
  if (d_lg <= 0 || d_gs <= 0)
    throw std::invalid_argument("throughput: degenerate path segment");
  const TVec3<double> xg{path.x_g.x, path.x_g.y, path.x_g.z};
  const TVec3<double> ng{path.n_g.x, path.n_g.y, path.n_g.z};
  return throughput_t<double>(path.x_l, path.x_s, xg, ng, path.n_w);
}

std::vector<BinWeight> bin_weights(double t, int num_bins, double bin_width,
                                   double t0, double sigma_t) {
  if (sigma_t <= 0) throw std::invalid_argument("bin_weights: sigma_t must be > 0");
  const auto w = bin_weights_t<double>(t, num_bins, bin_width, t0, sigma_t);
  std::vector<BinWeight> out;
  out.reserve(w.size());
  for (const auto& [bin, weight] : w) out.push_back({bin, weight});
  return out;
}

static void check_wall_cfg(const WallGrid& wall, const SceneConfig& cfg) {
  wall.validate();
  cfg.validate();
}

TransientCube render_mesh(const TriangleMesh& mesh, const WallGrid& wall,
                          const SceneConfig& cfg, const RenderOptions& opts) {
  check_wall_cfg(wall, cfg);
  const int S = static_cast<int>(wall.sensor_points.size());
  const int L = wall.confocal ? 1 : static_cast<int>(wall.laser_points.size());
  TransientCube cube = TransientCube::zeros(L, S, cfg.num_bins, wall.confocal,
                                            cfg.bin_width, 0.0);
  cube.laser_rows = wall.laser_rows;
  cube.laser_cols = wall.laser_cols;
  cube.sensor_rows = wall.sensor_rows;
  cube.sensor_cols = wall.sensor_cols;
  const HemisphereGrid grid = hemisphere_grid(cfg.hemisphere_resolution, wall.wall_normal);

  parallel_for(S, [&](size_t s) {
    const Vec3 x_s = wall.sensor_points[s];
    for (const Vec3& dir : grid.dirs) {
      const auto hit = intersect(mesh, x_s, dir, 1e-9, 1e30);
      if (!hit) continue;
      // Orient the geometric normal toward the wall side the ray came from.
      Vec3 n_g = hit->normal;
      if (dot(n_g, dir) > 0) n_g = -n_g;
      if (opts.occlusion && ray_occluded(mesh, hit->point, x_s)) continue;
      for (int l = 0; l < L; ++l) {
        const Vec3 x_l = wall.confocal ? x_s : wall.laser_points[l];
        if (opts.occlusion && ray_occluded(mesh, x_l, hit->point)) continue;
        PathSample path{x_l, hit->point, x_s, n_g, wall.wall_normal, hit->albedo};
        const double val = path.rho * throughput(path);
        const double t = tof(path, cfg.c);
        for (const auto& [bin, w] :
             bin_weights(t, cfg.num_bins, cfg.bin_width, cube.t0, cfg.sigma_t_bins))
          cube.at(l, static_cast<int>(s), bin) += val * w;
      }
    }
  });
  return cube;
}

TransientCube render_implicit(const ImplicitSurface& G, const AlbedoGrid& rho,
                              const WallGrid& wall, const SceneConfig& cfg) {
  check_wall_cfg(wall, cfg);
  const int S = static_cast<int>(wall.sensor_points.size());
  if (G.num_sensors != S || G.n != cfg.hemisphere_resolution)
    throw std::invalid_argument("render_implicit: surface/wall shape mismatch");
  const int L = wall.confocal ? 1 : static_cast<int>(wall.laser_points.size());
  TransientCube cube = TransientCube::zeros(L, S, cfg.num_bins, wall.confocal,
                                            cfg.bin_width, 0.0);
  cube.laser_rows = wall.laser_rows;
  cube.laser_cols = wall.laser_cols;
  cube.sensor_rows = wall.sensor_rows;
  cube.sensor_cols = wall.sensor_cols;

  parallel_for(S, [&](size_t s) {
    const Vec3 x_s = wall.sensor_points[s];
    for (int i = 0; i < G.n * G.n; ++i) {
      const SurfaceCell& c = G.cells[s * G.n * G.n + i];
      if (!c.hit) continue;
      const double a = sample_albedo(rho, c.x_g);
      for (int l = 0; l < L; ++l) {
        const Vec3 x_l = wall.confocal ? x_s : wall.laser_points[l];
        PathSample path{x_l, c.x_g, x_s, c.n_g, wall.wall_normal, a};
        const double val = a * throughput(path);
        const double t = tof(path, cfg.c);
        for (const auto& [bin, w] :
             bin_weights(t, cfg.num_bins, cfg.bin_width, cube.t0, cfg.sigma_t_bins))
          cube.at(l, static_cast<int>(s), bin) += val * w;
      }
    }
  });
  return cube;
}

}  // namespace nlos
