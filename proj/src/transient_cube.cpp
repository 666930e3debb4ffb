#include "nlos/transient_cube.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace nlos {

TransientCube TransientCube::zeros(int L, int S, int T, bool confocal,
                                   double bin_width, double t0) {
  TransientCube c;
  c.L = confocal ? 1 : L;
  c.S = S;
  c.T = T;
  c.confocal = confocal;
  c.bin_width = bin_width;
  c.t0 = t0;
  c.values.assign(static_cast<size_t>(c.L) * S * T, 0.0);
  return c;
}

void TransientCube::validate() const {
  if (bin_width <= 0) throw std::invalid_argument("cube: bin_width must be > 0");
  if (values.size() != static_cast<size_t>(L) * S * T)
    throw std::invalid_argument("cube: value count inconsistent with dims");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("cube: non-finite value");
}

namespace {

#pragma pack(push, 1)
struct NltcHeader {
  char magic[4];      // "NLTC"
  uint32_t version;   // 1
  uint32_t L, S, T;
  uint32_t confocal;
  double bin_width;
  double t0;
  uint32_t laser_rows, laser_cols, sensor_rows, sensor_cols;
  char pad[8];
};
#pragma pack(pop)
static_assert(sizeof(NltcHeader) == 64);

}  // namespace

void save_cube(const TransientCube& cube, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write cube file: " + path);
  NltcHeader h{};
  std::memcpy(h.magic, "NLTC", 4);
  h.version = 1;
  h.L = cube.L;
  h.S = cube.S;
  h.T = cube.T;
  h.confocal = cube.confocal ? 1 : 0;
  h.bin_width = cube.bin_width;
  h.t0 = cube.t0;
  h.laser_rows = cube.laser_rows;
  h.laser_cols = cube.laser_cols;
  h.sensor_rows = cube.sensor_rows;
  h.sensor_cols = cube.sensor_cols;
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  std::vector<float> buf(cube.values.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(cube.values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to cube file: " + path);
}

TransientCube load_cube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cube file: " + path);
  NltcHeader h{};
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in || std::memcmp(h.magic, "NLTC", 4) != 0 || h.version != 1)
    throw std::runtime_error("not an NLTC v1 file: " + path);
  TransientCube c;
  c.L = static_cast<int>(h.L);
  c.S = static_cast<int>(h.S);
  c.T = static_cast<int>(h.T);
  c.confocal = h.confocal != 0;
  c.bin_width = h.bin_width;
  c.t0 = h.t0;
  c.laser_rows = static_cast<int>(h.laser_rows);
  c.laser_cols = static_cast<int>(h.laser_cols);
  c.sensor_rows = static_cast<int>(h.sensor_rows);
  c.sensor_cols = static_cast<int>(h.sensor_cols);
  std::vector<float> buf(static_cast<size_t>(c.L) * c.S * c.T);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated cube file: " + path);
  c.values.assign(buf.begin(), buf.end());
  c.validate();
  return c;
}

void save_cube_metadata(const TransientCube& cube, const std::string& path) {
  nlohmann::json j;
  j["format"] = "NLTC";
  j["version"] = 1;
  j["dims"] = {cube.L, cube.S, cube.T};
  j["confocal"] = cube.confocal;
  j["bin_width_s"] = cube.bin_width;
  j["t0_s"] = cube.t0;
  j["laser_grid"] = {cube.laser_rows, cube.laser_cols};
  j["sensor_grid"] = {cube.sensor_rows, cube.sensor_cols};
  j["value_type"] = "float32_le";
  j["order"] = "(l, s, t) row-major";
  j["quadrature"] = "equal weight per concentric hemisphere cell";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metadata: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace nlos
