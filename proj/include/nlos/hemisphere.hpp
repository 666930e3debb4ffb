#pragma once

#include <vector>

#include "nlos/vec3.hpp"

namespace nlos {

// Orthonormal wall-local frame. The tangent pair is derived from the normal
// with the smallest-component trick so the frame is reproducible across
// platforms; (b1, b2, n) is right-handed.
struct Frame {
  Vec3 b1, b2, n;

  Vec3 to_world(double x, double y, double z) const {
    return b1 * x + b2 * y + n * z;
  }
};

Frame make_frame(const Vec3& normal);

// Shirley-Chiu concentric square-to-disk map on [-1,1]^2.
void square_to_disk(double u, double v, double& dx, double& dy);

// Lifts the concentric disk point to the unit hemisphere about wall_normal:
// disk (x, y) maps to (x, y, sqrt(1 - r^2)) in the wall-local frame.
Vec3 concentric_to_hemisphere(double u, double v, const Vec3& wall_normal);

// n x n lattice of hemisphere directions sampled at cell centers of [-1,1]^2,
// with 4-neighbor adjacency along lattice rows and columns.
struct HemisphereGrid {
  int n = 0;
  std::vector<Vec3> dirs;  // index = iy * n + ix

  const Vec3& at(int ix, int iy) const { return dirs[iy * n + ix]; }
  int index(int ix, int iy) const { return iy * n + ix; }
};

HemisphereGrid hemisphere_grid(int n, const Vec3& wall_normal);

}  // namespace nlos
