#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nlos/vec3.hpp"

namespace nlos {

// Triangle soup with per-triangle albedo; ground-truth geometry for the
// synthetic datasets.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<double> albedo;  // one value in [0,1] per triangle

  void validate() const;
};

struct RayHit {
  double t = 0;       // distance along the (unit) ray direction
  int triangle = -1;
  Vec3 point;
  Vec3 normal;        // geometric normal, unit length
  double albedo = 0;
};

// Nearest intersection with t in (t_min, t_max); flat scan over triangles.
std::optional<RayHit> intersect(const TriangleMesh& mesh, const Vec3& origin,
                                const Vec3& dir, double t_min, double t_max);

// True iff any triangle crosses the open segment (a, b), excluding a relative
// epsilon of 1e-6 at both endpoints.
bool ray_occluded(const TriangleMesh& mesh, const Vec3& a, const Vec3& b);

// ASCII OBJ subset (v/f records, triangulated) plus a JSON sidecar with a
// per-triangle "albedo" array; a missing sidecar path yields albedo 1.
TriangleMesh load_obj(const std::string& obj_path,
                      const std::string& albedo_json_path = "");

}  // namespace nlos
