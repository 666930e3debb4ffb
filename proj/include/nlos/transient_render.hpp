#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/mesh.hpp"
#include "nlos/surface.hpp"
#include "nlos/transient_cube.hpp"
#include "nlos/vec3.hpp"

namespace nlos {

// Three-bounce path x_l -> x_g -> x_s with the stored wall and surface
// normals and the surface albedo.
struct PathSample {
  Vec3 x_l, x_g, x_s;
  Vec3 n_g;
  Vec3 n_w;
  double rho = 1;
};

// Templated 3-vector so the path radiometry below can run on plain doubles
// or on dual numbers when building local Jacobians.
template <typename T>
struct TVec3 {
  T x, y, z;

  TVec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  TVec3 operator-(const TVec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  TVec3 operator+(const TVec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  TVec3 operator/(const T& s) const { return {x / s, y / s, z / s}; }
  TVec3 operator-() const { return {T(0) - x, T(0) - y, T(0) - z}; }
  friend TVec3 operator-(const Vec3& a, const TVec3& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
};

template <typename T>
TVec3<T> tcross(const TVec3<T>& a, const TVec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
T tdot(const TVec3<T>& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <typename T>
T tdot(const TVec3<T>& a, const TVec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <typename T>
T tnorm(const TVec3<T>& a) {
  return sqrt(tdot(a, a));
}

// Time of flight of the three-bounce path: (|x_g-x_l| + |x_s-x_g|) / c.
double tof(const PathSample& path, double c);

// Geometric path throughput |cos t1||cos t2|/d_lg^2 * |cos t3||cos t4|/d_gs^2.
// Visibility factors are handled by the caller (mesh rendering gates on
// segment occlusion; implicit rendering assumes visibility 1).
double throughput(const PathSample& path);

template <typename T>
T throughput_t(const Vec3& x_l, const Vec3& x_s, const TVec3<T>& x_g,
               const TVec3<T>& n_g, const Vec3& n_w) {
  const TVec3<T> lg = x_g - x_l;     // laser -> surface
  const TVec3<T> gs = x_s - x_g;     // surface -> sensor
  const T d_lg = tnorm(lg);
  const T d_gs = tnorm(gs);
  const T cos1 = tdot(lg, n_w) / d_lg;   // wall normal vs outgoing segment
  const T cos2 = tdot(-lg, n_g) / d_lg;  // surface normal vs incoming segment
  const T cos3 = tdot(gs, n_g) / d_gs;
  const T cos4 = tdot(-gs, n_w) / d_gs;
  return abs(cos1) * abs(cos2) / (d_lg * d_lg) * abs(cos3) * abs(cos4) /
         (d_gs * d_gs);
}

// Gaussian temporal binning: weight(tau) = exp(-(tau - t_bins)^2 / (2 s^2))
// with t_bins = (t - t0)/bin_width, truncated beyond 4 sigma; out-of-range
// bins are dropped. sigma_t is in bins (default 0.62).
struct BinWeight {
  int bin;
  double weight;
};
std::vector<BinWeight> bin_weights(double t, int num_bins, double bin_width,
                                   double t0, double sigma_t);

template <typename T>
std::vector<std::pair<int, T>> bin_weights_t(const T& t, int num_bins,
                                             double bin_width, double t0,
                                             double sigma_t) {
  const T tb = (t - t0) / bin_width;
  const double tbv = get_value(tb);
  const int lo = std::max(0, static_cast<int>(std::ceil(tbv - 4.0 * sigma_t)));
  const int hi =
      std::min(num_bins - 1, static_cast<int>(std::floor(tbv + 4.0 * sigma_t)));
  std::vector<std::pair<int, T>> out;
  out.reserve(hi >= lo ? hi - lo + 1 : 0);
  const double inv2s2 = 1.0 / (2.0 * sigma_t * sigma_t);
  for (int tau = lo; tau <= hi; ++tau) {
    const T dt = double(tau) - tb;
    out.emplace_back(tau, exp(T(0) - dt * dt * inv2s2));
  }
  return out;
}

struct RenderOptions {
  bool occlusion = true;  // mesh mode only; disabled in monotonicity tests
};

// Three-bounce transient rendering against mesh geometry: hemisphere rays
// from each sensor point, nearest hit, occlusion gates on both segments,
// rho * throughput accumulated through Gaussian bin weights at the tof.
TransientCube render_mesh(const TriangleMesh& mesh, const WallGrid& wall,
                          const SceneConfig& cfg, const RenderOptions& opts = {});

// Same accumulation driven by the implicit surface; albedo sampled from the
// per-voxel grid, visibility assumed 1, rays with no hit contribute nothing.
TransientCube render_implicit(const ImplicitSurface& G, const AlbedoGrid& rho,
                              const WallGrid& wall, const SceneConfig& cfg);

}  // namespace nlos
