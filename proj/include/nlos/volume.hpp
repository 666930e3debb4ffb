#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/dual.hpp"
#include "nlos/vec3.hpp"

namespace nlos {

// Voxelized scalar field over the hidden volume: nonnegative intensity for
// reconstructions, reflectance in [0,1] for the albedo grid. Voxel centers
// sit at origin + (index + 0.5) * pitch; storage is (x, y, z) row-major.
struct VolumeGrid {
  int W = 0, H = 0, D = 0;
  Vec3 origin;
  Vec3 pitch;
  std::vector<double> values;

  static VolumeGrid from_config(const SceneConfig& cfg, double fill = 0.0);

  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(x) * H + y) * D + z;
  }
  double& at(int x, int y, int z) { return values[index(x, y, z)]; }
  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  size_t size() const { return values.size(); }
  Vec3 voxel_center(int x, int y, int z) const {
    return origin + Vec3{(x + 0.5) * pitch.x, (y + 0.5) * pitch.y, (z + 0.5) * pitch.z};
  }
  bool contains(const Vec3& p) const {
    return p.x >= origin.x && p.x <= origin.x + W * pitch.x &&
           p.y >= origin.y && p.y <= origin.y + H * pitch.y &&
           p.z >= origin.z && p.z <= origin.z + D * pitch.z;
  }
  void validate_nonnegative() const;
};

// Per-voxel surface reflectance; same lattice as the reconstruction volume.
using AlbedoGrid = VolumeGrid;

inline double get_value(double x) { return x; }
template <int N>
double get_value(const Dual<N>& d) {
  return d.v;
}
inline int clamp_floor(double q, int n) {
  int i = static_cast<int>(std::floor(q));
  if (i < 0) i = 0;
  if (i > n - 1) i = n - 1;
  return i;
}
inline double clamp01(double f) { return f < 0 ? 0.0 : (f > 1 ? 1.0 : f); }
template <int N>
Dual<N> clamp01(const Dual<N>& f) {
  if (f.v < 0) return Dual<N>(0.0);
  if (f.v > 1) return Dual<N>(1.0);
  return f;
}

// Standard 8-corner trilinear blend in voxel coordinates (clamp-to-edge at
// the boundary); points outside the volume return 0. Templated so the same
// code path serves plain evaluation and dual-number local derivatives.
template <typename T, typename Point3>
T trilinear_t(const VolumeGrid& v, const Point3& p) {
  const double px = get_value(p.x), py = get_value(p.y), pz = get_value(p.z);
  if (px < v.origin.x || px > v.origin.x + v.W * v.pitch.x || py < v.origin.y ||
      py > v.origin.y + v.H * v.pitch.y || pz < v.origin.z ||
      pz > v.origin.z + v.D * v.pitch.z)
    return T(0.0);
  const T qx = (p.x - v.origin.x) / v.pitch.x - 0.5;
  const T qy = (p.y - v.origin.y) / v.pitch.y - 0.5;
  const T qz = (p.z - v.origin.z) / v.pitch.z - 0.5;
  const int x0 = clamp_floor(get_value(qx), v.W);
  const int y0 = clamp_floor(get_value(qy), v.H);
  const int z0 = clamp_floor(get_value(qz), v.D);
  const int x1 = x0 + 1 < v.W ? x0 + 1 : x0;
  const int y1 = y0 + 1 < v.H ? y0 + 1 : y0;
  const int z1 = z0 + 1 < v.D ? z0 + 1 : z0;
  const T fx = clamp01(qx - double(x0));
  const T fy = clamp01(qy - double(y0));
  const T fz = clamp01(qz - double(z0));
  const T c00 = v.at(x0, y0, z0) * (1.0 - fx) + v.at(x1, y0, z0) * fx;
  const T c10 = v.at(x0, y1, z0) * (1.0 - fx) + v.at(x1, y1, z0) * fx;
  const T c01 = v.at(x0, y0, z1) * (1.0 - fx) + v.at(x1, y0, z1) * fx;
  const T c11 = v.at(x0, y1, z1) * (1.0 - fx) + v.at(x1, y1, z1) * fx;
  const T c0 = c00 * (1.0 - fy) + c10 * fy;
  const T c1 = c01 * (1.0 - fy) + c11 * fy;
  return c0 * (1.0 - fz) + c1 * fz;
}

double trilinear(const VolumeGrid& v, const Vec3& p);

// Trilinear corner indices and weights at p (corners may repeat at clamped
// edges). Used to scatter adjoints back onto the lattice.
struct TrilinearStencil {
  bool inside = false;
  size_t idx[8];
  double w[8];
};
TrilinearStencil trilinear_stencil(const VolumeGrid& v, const Vec3& p);

// Raw float32 little-endian voxel stream plus a JSON sidecar carrying dims,
// origin and pitch.
void save_volume(const VolumeGrid& v, const std::string& raw_path,
                 const std::string& json_path);
VolumeGrid load_volume(const std::string& raw_path, const std::string& json_path);

}  // namespace nlos
