#include "nlos/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace nlos {

double SceneConfig::effective_ray_step() const {
  if (ray_step > 0) return ray_step;
  const Vec3 p = voxel_pitch();
  return 0.5 * std::min({p.x, p.y, p.z});
}

void SceneConfig::validate() const {
  if (bin_width <= 0) throw std::invalid_argument("bin_width must be > 0");
  if (num_bins < 1) throw std::invalid_argument("num_bins must be >= 1");
  if (c <= 0) throw std::invalid_argument("c must be > 0");
  if (volume_extent.x <= 0 || volume_extent.y <= 0 || volume_extent.z <= 0)
    throw std::invalid_argument("volume_extent must be positive");
  for (int r : volume_resolution)
    if (r < 1) throw std::invalid_argument("volume_resolution must be >= 1");
  if (hemisphere_resolution < 3)
    throw std::invalid_argument("hemisphere_resolution must be >= 3");
  if (ray_step < 0) throw std::invalid_argument("ray_step must be > 0");
  if (sigma_t_bins <= 0) throw std::invalid_argument("sigma_t_bins must be > 0");
}

void WallGrid::validate() const {
  if (laser_points.empty() || sensor_points.empty())
    throw std::invalid_argument("wall grids must be nonempty");
  if (static_cast<int>(laser_points.size()) != laser_rows * laser_cols ||
      static_cast<int>(sensor_points.size()) != sensor_rows * sensor_cols)
    throw std::invalid_argument("wall grid dims inconsistent with point count");
  const double d0 = dot(sensor_points[0], wall_normal);
  for (const auto& p : laser_points)
    if (std::fabs(dot(p, wall_normal) - d0) > 1e-9)
      throw std::invalid_argument("laser points not coplanar");
  for (const auto& p : sensor_points)
    if (std::fabs(dot(p, wall_normal) - d0) > 1e-9)
      throw std::invalid_argument("sensor points not coplanar");
  if (confocal) {
    if (laser_points.size() != sensor_points.size())
      throw std::invalid_argument("confocal grids must match");
    for (size_t i = 0; i < laser_points.size(); ++i)
      if (norm(laser_points[i] - sensor_points[i]) != 0)
        throw std::invalid_argument("confocal grids must be element-wise equal");
  }
}

WallGrid make_planar_wall(int rows, int cols, double size_x, double size_y,
                          const Vec3& center, bool confocal) {
  WallGrid w;
  w.confocal = confocal;
  w.sensor_rows = rows;
  w.sensor_cols = cols;
  w.laser_rows = rows;
  w.laser_cols = cols;
  w.sensor_points.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x = center.x + size_x * ((c + 0.5) / cols - 0.5);
      const double y = center.y + size_y * ((r + 0.5) / rows - 0.5);
      w.sensor_points.push_back({x, y, center.z});
    }
  }
  w.laser_points = w.sensor_points;
  return w;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct KvFile {
  std::map<std::string, std::string> kv;

  bool has(const std::string& k) const { return kv.count(k) != 0; }
  double num(const std::string& k, double dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stod(it->second);
  }
  int integer(const std::string& k, int dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stoi(it->second);
  }
  Vec3 vec(const std::string& k, const Vec3& dflt) const {
    auto it = kv.find(k);
    if (it == kv.end()) return dflt;
    std::string s = it->second;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream is(s);
    Vec3 v;
    if (!(is >> v.x >> v.y >> v.z))
      throw std::invalid_argument("config: bad vector for key " + k);
    return v;
  }
};

KvFile parse_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  KvFile f;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) f.kv[key] = val;
  }
  return f;
}

}  // namespace

Scene load_scene_config(const std::string& path) {
  const KvFile f = parse_kv(path);
  Scene s;
  SceneConfig& c = s.cfg;
  c.bin_width = f.num("bin_width", c.bin_width);
  c.num_bins = f.integer("num_bins", c.num_bins);
  c.c = f.num("c", c.c);
  c.volume_origin = f.vec("volume_origin", c.volume_origin);
  c.volume_extent = f.vec("volume_extent", c.volume_extent);
  const Vec3 res = f.vec("volume_resolution",
                         {double(c.volume_resolution[0]),
                          double(c.volume_resolution[1]),
                          double(c.volume_resolution[2])});
  c.volume_resolution[0] = static_cast<int>(res.x);
  c.volume_resolution[1] = static_cast<int>(res.y);
  c.volume_resolution[2] = static_cast<int>(res.z);
  c.hemisphere_resolution = f.integer("hemisphere_resolution", c.hemisphere_resolution);
  c.ray_step = f.num("ray_step", c.ray_step);
  c.beta = f.num("beta", c.beta);
  c.threshold = f.num("threshold", c.threshold);
  c.sigma_t_bins = f.num("sigma_t_bins", c.sigma_t_bins);
  c.validate();

  const int rows = f.integer("wall_rows", 32);
  const int cols = f.integer("wall_cols", 32);
  const double sx = f.num("wall_size_x", 0.64);
  const double sy = f.num("wall_size_y", 0.64);
  const Vec3 center = f.vec("wall_center", {0, 0, 0});
  const bool confocal = f.integer("confocal", 1) != 0;
  s.wall = make_planar_wall(rows, cols, sx, sy, center, confocal);
  if (!confocal && f.has("laser_rows")) {
    const int lr = f.integer("laser_rows", rows);
    const int lc = f.integer("laser_cols", cols);
    const double lsx = f.num("laser_size_x", sx);
    const double lsy = f.num("laser_size_y", sy);
    const WallGrid lw =
        make_planar_wall(lr, lc, lsx, lsy, f.vec("laser_center", center), false);
    s.wall.laser_points = lw.laser_points;
    s.wall.laser_rows = lr;
    s.wall.laser_cols = lc;
  }
  s.wall.validate();
  return s;
}

}  // namespace nlos
