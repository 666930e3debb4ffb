#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/hemisphere.hpp"
#include "nlos/volume.hpp"

namespace nlos {

// Implicit geometry seen from one sensor point: per concentric-grid cell a
// hit distance, surface point and normal. Cells that used the reversed-ray
// fallback normal are flagged so tests can exclude them.
struct SurfaceCell {
  bool hit = false;
  bool fallback_normal = false;
  double d = 0;  // meters along the cell's ray
  Vec3 x_g;
  Vec3 n_g;
};

struct ImplicitSurface {
  int num_sensors = 0;
  int n = 0;  // concentric grid is n x n per sensor
  HemisphereGrid grid;
  std::vector<SurfaceCell> cells;  // (sensor, iy, ix) row-major

  SurfaceCell& cell(int s, int ix, int iy) {
    return cells[(static_cast<size_t>(s) * n + iy) * n + ix];
  }
  const SurfaceCell& cell(int s, int ix, int iy) const {
    return cells[(static_cast<size_t>(s) * n + iy) * n + ix];
  }
  size_t hit_count() const;
};

struct RaySample {
  double d;  // distance from the ray origin
  double intensity;
};

// Samples at d_i = (i + 1/2) * step from origin, keeping those inside the
// volume bounding box; intensities by trilinear interpolation. A ray that
// misses the box yields an empty sequence.
std::vector<RaySample> ray_march(const VolumeGrid& v, const Vec3& origin,
                                 const Vec3& dir, double step);

// Differentiable depth along a ray: exponentially weighted mean of sample
// distances with max-shifted weights e^{beta (I_i - max I)}. Returns nothing
// when the samples are empty or max I falls below threshold.
std::optional<double> soft_depth(const std::vector<RaySample>& samples,
                                 double beta, double threshold);

// Normals from the four cardinal neighbors on the concentric grid: two
// triangles (P_N, P_E, P_S) and (P_S, P_W, P_N), edge cross products oriented
// toward the wall, normalized sum. Cells missing a hit neighbor (or with
// degenerate triangles) fall back to the reversed ray direction.
struct NormalEstimate {
  Vec3 n;
  bool fallback;
};
std::vector<NormalEstimate> estimate_normals(
    const std::vector<std::optional<double>>& depths, const HemisphereGrid& dirs,
    const Vec3& x_s);

// Optional per-cell hit override used to hold the discrete hit/miss branch
// fixed while differentiating.
struct HitMask {
  std::vector<uint8_t> hit;  // (sensor, iy, ix) row-major
};

// Composition hemisphere_grid -> ray_march -> soft_depth -> estimate_normals
// over every sensor point; expects a normalized volume (max = 1).
ImplicitSurface extract_surface(const VolumeGrid& v, const WallGrid& wall,
                                const SceneConfig& cfg, double beta,
                                double threshold,
                                const HitMask* frozen_hits = nullptr);

// Trilinear albedo lookup clamped to [0,1]; 0 outside the volume.
double sample_albedo(const AlbedoGrid& g, const Vec3& x);

// ASCII PLY with x, y, z, nx, ny, nz and a per-point albedo scalar; one
// vertex per hit cell.
void export_pointcloud(const ImplicitSurface& G, const AlbedoGrid& rho,
                       const std::string& path);

}  // namespace nlos
