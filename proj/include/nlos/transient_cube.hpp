#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nlos {

// Time-resolved measurement matrix H(x_l, x_s, t). Confocal cubes store
// L = 1 and are addressed as (s, t). Values are kept in double precision in
// memory; the NLTC file format stores float32 little-endian.
struct TransientCube {
  int L = 1, S = 0, T = 0;
  bool confocal = true;
  double bin_width = 0;  // seconds
  double t0 = 0;         // time of bin 0 center, seconds
  int laser_rows = 0, laser_cols = 0, sensor_rows = 0, sensor_cols = 0;
  std::vector<double> values;  // (l, s, t) row-major

  static TransientCube zeros(int L, int S, int T, bool confocal,
                             double bin_width, double t0 = 0);

  size_t index(int l, int s, int t) const {
    return (static_cast<size_t>(l) * S + s) * T + t;
  }
  double& at(int l, int s, int t) { return values[index(l, s, t)]; }
  double at(int l, int s, int t) const { return values[index(l, s, t)]; }
  // Confocal accessors.
  double& at(int s, int t) { return values[static_cast<size_t>(s) * T + t]; }
  double at(int s, int t) const { return values[static_cast<size_t>(s) * T + t]; }

  bool same_shape(const TransientCube& o) const {
    return L == o.L && S == o.S && T == o.T && confocal == o.confocal;
  }
  void validate() const;
};

// NLTC binary format: 64-byte header (magic "NLTC", version, dims, confocal
// flag, bin_width, t0, wall grid dims), then float32 LE values.
void save_cube(const TransientCube& cube, const std::string& path);
TransientCube load_cube(const std::string& path);

// Companion JSON metadata (dims, units, format notes) for interoperability.
void save_cube_metadata(const TransientCube& cube, const std::string& path);

}  // namespace nlos
