#include "nlos/volume.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace nlos {

VolumeGrid VolumeGrid::from_config(const SceneConfig& cfg, double fill) {
  VolumeGrid v;
  v.W = cfg.volume_resolution[0];
  v.H = cfg.volume_resolution[1];
  v.D = cfg.volume_resolution[2];
  v.origin = cfg.volume_origin;
  v.pitch = cfg.voxel_pitch();
  v.values.assign(static_cast<size_t>(v.W) * v.H * v.D, fill);
  return v;
}

void VolumeGrid::validate_nonnegative() const {
  for (double x : values)
    if (!std::isfinite(x) || x < 0)
      throw std::invalid_argument("volume: values must be finite and >= 0");
}

double trilinear(const VolumeGrid& v, const Vec3& p) {
  return trilinear_t<double>(v, p);
}

TrilinearStencil trilinear_stencil(const VolumeGrid& v, const Vec3& p) {
  TrilinearStencil s{};
  if (!v.contains(p)) return s;
  s.inside = true;
  const double qx = (p.x - v.origin.x) / v.pitch.x - 0.5;
  const double qy = (p.y - v.origin.y) / v.pitch.y - 0.5;
  const double qz = (p.z - v.origin.z) / v.pitch.z - 0.5;
  const int x0 = clamp_floor(qx, v.W);
  const int y0 = clamp_floor(qy, v.H);
  const int z0 = clamp_floor(qz, v.D);
  const int x1 = x0 + 1 < v.W ? x0 + 1 : x0;
  const int y1 = y0 + 1 < v.H ? y0 + 1 : y0;
  const int z1 = z0 + 1 < v.D ? z0 + 1 : z0;
  const double fx = clamp01(qx - x0), fy = clamp01(qy - y0), fz = clamp01(qz - z0);
  const int xs[2] = {x0, x1}, ys[2] = {y0, y1}, zs[2] = {z0, z1};
  const double wx[2] = {1 - fx, fx}, wy[2] = {1 - fy, fy}, wz[2] = {1 - fz, fz};
  int k = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c, ++k) {
        s.idx[k] = v.index(xs[a], ys[b], zs[c]);
        s.w[k] = wx[a] * wy[b] * wz[c];
      }
  return s;
}

void save_volume(const VolumeGrid& v, const std::string& raw_path,
                 const std::string& json_path) {
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write volume file: " + raw_path);
  std::vector<float> buf(v.values.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(v.values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to volume file: " + raw_path);

  nlohmann::json j;
  j["dims"] = {v.W, v.H, v.D};
  j["origin_m"] = {v.origin.x, v.origin.y, v.origin.z};
  j["pitch_m"] = {v.pitch.x, v.pitch.y, v.pitch.z};
  j["value_type"] = "float32_le";
  j["order"] = "(x, y, z) row-major";
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write volume sidecar: " + json_path);
  js << j.dump(2) << "\n";
}

VolumeGrid load_volume(const std::string& raw_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("cannot open volume sidecar: " + json_path);
  nlohmann::json j;
  js >> j;
  VolumeGrid v;
  v.W = j.at("dims")[0];
  v.H = j.at("dims")[1];
  v.D = j.at("dims")[2];
  v.origin = {j.at("origin_m")[0], j.at("origin_m")[1], j.at("origin_m")[2]};
  v.pitch = {j.at("pitch_m")[0], j.at("pitch_m")[1], j.at("pitch_m")[2]};
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume file: " + raw_path);
  std::vector<float> buf(static_cast<size_t>(v.W) * v.H * v.D);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated volume file: " + raw_path);
  v.values.assign(buf.begin(), buf.end());
  return v;
}

}  // namespace nlos
