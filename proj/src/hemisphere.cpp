#include "nlos/hemisphere.hpp"

#include <cmath>
#include <stdexcept>

namespace nlos {

Frame make_frame(const Vec3& normal) {
  // Pick the axis with the smallest |component| (lowest index on ties).
  int axis = 0;
  double best = std::fabs(normal.x);
  if (std::fabs(normal.y) < best) {
    best = std::fabs(normal.y);
    axis = 1;
  }
  if (std::fabs(normal.z) < best) axis = 2;
  Vec3 e{0, 0, 0};
  if (axis == 0)
    e.x = 1;
  else if (axis == 1)
    e.y = 1;
  else
    e.z = 1;
  Frame f;
  f.n = normal;
  f.b2 = normalized(cross(normal, e));
  f.b1 = cross(f.b2, normal);
  return f;
}

void square_to_disk(double u, double v, double& dx, double& dy) {
  constexpr double kPiOver4 = 0.785398163397448309616;
  constexpr double kPiOver2 = 1.570796326794896619231;
  if (u == 0 && v == 0) {
    dx = dy = 0;
    return;
  }
  double r, phi;
  if (u * u > v * v) {
    r = u;
    phi = kPiOver4 * (v / u);
  } else {
    r = v;
    phi = kPiOver2 - kPiOver4 * (u / v);
  }
  dx = r * std::cos(phi);
  dy = r * std::sin(phi);
}

Vec3 concentric_to_hemisphere(double u, double v, const Vec3& wall_normal) {
  double dx, dy;
  square_to_disk(u, v, dx, dy);
  const double z2 = 1.0 - dx * dx - dy * dy;
  const double z = std::sqrt(z2 > 0 ? z2 : 0.0);
  return make_frame(wall_normal).to_world(dx, dy, z);
}

HemisphereGrid hemisphere_grid(int n, const Vec3& wall_normal) {
  if (n < 3) throw std::invalid_argument("hemisphere_grid: n must be >= 3");
  const Frame f = make_frame(wall_normal);
  HemisphereGrid g;
  g.n = n;
  g.dirs.resize(static_cast<size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double u = (2.0 * ix + 1.0) / n - 1.0;
      const double v = (2.0 * iy + 1.0) / n - 1.0;
      double dx, dy;
      square_to_disk(u, v, dx, dy);
      const double z2 = 1.0 - dx * dx - dy * dy;
      g.dirs[g.index(ix, iy)] = f.to_world(dx, dy, std::sqrt(z2 > 0 ? z2 : 0.0));
    }
  }
  return g;
}

}  // namespace nlos
