#include "nlos/mesh.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace nlos {

void TriangleMesh::validate() const {
  if (albedo.size() != triangles.size())
    throw std::invalid_argument("mesh: albedo count must match triangle count");
  const int nv = static_cast<int>(vertices.size());
  for (size_t i = 0; i < triangles.size(); ++i) {
    const auto& t = triangles[i];
    for (int k : t)
      if (k < 0 || k >= nv) throw std::invalid_argument("mesh: index out of range");
    const Vec3 e1 = vertices[t[1]] - vertices[t[0]];
    const Vec3 e2 = vertices[t[2]] - vertices[t[0]];
    if (norm(cross(e1, e2)) <= 0)
      throw std::invalid_argument("mesh: degenerate triangle");
    if (albedo[i] < 0 || albedo[i] > 1)
      throw std::invalid_argument("mesh: albedo outside [0,1]");
  }
}

// Moller-Trumbore.
static bool hit_triangle(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                         const Vec3& o, const Vec3& d, double& t_out) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = cross(d, e2);
  const double det = dot(e1, p);
  if (std::fabs(det) < 1e-15) return false;
  const double inv = 1.0 / det;
  const Vec3 tv = o - v0;
  const double u = dot(tv, p) * inv;
  if (u < 0 || u > 1) return false;
  const Vec3 q = cross(tv, e1);
  const double v = dot(d, q) * inv;
  if (v < 0 || u + v > 1) return false;
  t_out = dot(e2, q) * inv;
  return true;
}

std::optional<RayHit> intersect(const TriangleMesh& mesh, const Vec3& origin,
                                const Vec3& dir, double t_min, double t_max) {
  std::optional<RayHit> best;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& tri = mesh.triangles[i];
    double t;
    if (!hit_triangle(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                      mesh.vertices[tri[2]], origin, dir, t))
      continue;
    if (t <= t_min || t >= t_max) continue;
    if (!best || t < best->t) {
      RayHit h;
      h.t = t;
      h.triangle = static_cast<int>(i);
      h.point = origin + dir * t;
      h.normal = normalized(cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                                  mesh.vertices[tri[2]] - mesh.vertices[tri[0]]));
      h.albedo = mesh.albedo[i];
      best = h;
    }
  }
  return best;
}

bool ray_occluded(const TriangleMesh& mesh, const Vec3& a, const Vec3& b) {
  constexpr double kEps = 1e-6;
  const Vec3 d = b - a;
  for (const auto& tri : mesh.triangles) {
    double t;
    if (hit_triangle(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                     mesh.vertices[tri[2]], a, d, t) &&
        t > kEps && t < 1.0 - kEps)
      return true;
  }
  return false;
}

TriangleMesh load_obj(const std::string& obj_path,
                      const std::string& albedo_json_path) {
  std::ifstream in(obj_path);
  if (!in) throw std::runtime_error("cannot open OBJ file: " + obj_path);
  TriangleMesh m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string tag;
    if (!(is >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(is >> v.x >> v.y >> v.z))
        throw std::runtime_error("bad vertex record in " + obj_path);
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> idx;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        if (!(is >> tok)) throw std::runtime_error("bad face record in " + obj_path);
        idx[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      std::string extra;
      if (is >> extra)
        throw std::runtime_error("non-triangulated face in " + obj_path);
      m.triangles.push_back(idx);
    }
  }
  m.albedo.assign(m.triangles.size(), 1.0);
  if (!albedo_json_path.empty()) {
    std::ifstream ja(albedo_json_path);
    if (!ja) throw std::runtime_error("cannot open albedo sidecar: " + albedo_json_path);
    nlohmann::json j;
    ja >> j;
    const auto& arr = j.at("albedo");
    if (arr.size() != m.triangles.size())
      throw std::runtime_error("albedo sidecar count mismatch");
    for (size_t i = 0; i < m.triangles.size(); ++i) m.albedo[i] = arr[i].get<double>();
  }
  m.validate();
  return m;
}

}  // namespace nlos
