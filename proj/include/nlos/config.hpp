#pragma once

#include <string>
#include <vector>

#include "nlos/vec3.hpp"

namespace nlos {

// Fixed experiment description: temporal binning, hidden-volume bounds and
// resolution, hemispherical sampling density. All quantities in SI units.
struct SceneConfig {
  double bin_width = 16e-12;       // seconds per temporal bin
  int num_bins = 512;              // T
  double c = 299792458.0;          // speed of light, m/s
  Vec3 volume_origin{-0.32, -0.32, 0.35};
  Vec3 volume_extent{0.64, 0.64, 0.64};
  int volume_resolution[3] = {32, 32, 32};  // (W, H, D)
  int hemisphere_resolution = 16;           // n, concentric grid is n x n
  double ray_step = 0;  // meters; 0 -> half the minimum voxel pitch
  // Surface-extraction constants (interpreted on normalized intensities).
  double beta = 1e3;
  double threshold = 0.05;
  double sigma_t_bins = 0.62;  // Gaussian binning width, in bins

  Vec3 voxel_pitch() const {
    return {volume_extent.x / volume_resolution[0],
            volume_extent.y / volume_resolution[1],
            volume_extent.z / volume_resolution[2]};
  }
  double effective_ray_step() const;
  void validate() const;
};

// Relay-wall sampling grids. Points are coplanar; confocal grids share the
// same points for illumination and sensing.
struct WallGrid {
  std::vector<Vec3> laser_points;
  std::vector<Vec3> sensor_points;
  Vec3 wall_normal{0, 0, 1};
  bool confocal = true;
  int laser_rows = 0, laser_cols = 0;
  int sensor_rows = 0, sensor_cols = 0;

  void validate() const;
};

// Regular rectangular grid on the z = center.z plane, spanning size_x by
// size_y about the center, rows x cols sample points at cell centers.
WallGrid make_planar_wall(int rows, int cols, double size_x, double size_y,
                          const Vec3& center, bool confocal);

struct Scene {
  SceneConfig cfg;
  WallGrid wall;
};

// Key-value text config file ("key = value", '#' comments). See README for
// the schema.
Scene load_scene_config(const std::string& path);

}  // namespace nlos
