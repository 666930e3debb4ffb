#include "nlos/phasor.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "nlos/parallel.hpp"

namespace nlos {

void PhasorKernelParams::validate() const {
  if (omega_pf <= 0 || sigma_pf <= 0)
    throw std::invalid_argument("phasor kernel params must be positive");
}

double SpectralCube::omega(int k) const {
  return 2.0 * M_PI * (k0 + k) / (T * bin_width);
}

std::vector<double> bin_centers(int num_bins, double bin_width, double t0) {
  std::vector<double> t(num_bins);
  for (int i = 0; i < num_bins; ++i) t[i] = t0 + (i + 0.5) * bin_width;
  return t;
}

std::vector<std::complex<double>> phasor_kernel(const PhasorKernelParams& p,
                                                const std::vector<double>& t_grid) {
  p.validate();
  if (t_grid.empty()) return {};
  const double span = t_grid.back() - t_grid.front();
  if (6.0 * p.sigma_pf > span + (t_grid.size() > 1 ? span / (t_grid.size() - 1) : 0))
    std::fprintf(stderr, "warning: phasor envelope support exceeds the record\n");
  const double t_mid = 0.5 * (t_grid.front() + t_grid.back());
  std::vector<std::complex<double>> out(t_grid.size());
  for (size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i] - t_mid;
    const double env = std::exp(-t * t / (2.0 * p.sigma_pf * p.sigma_pf));
    out[i] = std::polar(env, p.omega_pf * t);
  }
  return out;
}

void derotate_spectrum(std::vector<std::complex<double>>& spec) {
  const size_t n = spec.size();
  if (n == 0) return;
  const double s0 = 0.5 * (static_cast<double>(n) - 1.0);
  for (size_t k = 0; k < n; ++k)
    spec[k] *= std::polar(1.0, 2.0 * M_PI * k * s0 / static_cast<double>(n));
}

namespace {

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

// Cached in-place c2c plans (FFTW_ESTIMATE for run-to-run determinism).
fftw_plan plan_1d(int n, int sign) {
  static std::map<std::pair<int, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(fftw_mutex());
  auto it = cache.find({n, sign});
  if (it != cache.end()) return it->second;
  fftw_complex* buf = fftw_alloc_complex(n);
  fftw_plan p = fftw_plan_dft_1d(n, buf, buf, sign, FFTW_ESTIMATE);
  fftw_free(buf);
  cache[{n, sign}] = p;
  return p;
}

fftw_plan plan_2d(int ny, int nx, int sign) {
  static std::map<std::tuple<int, int, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(fftw_mutex());
  auto it = cache.find({ny, nx, sign});
  if (it != cache.end()) return it->second;
  fftw_complex* buf = fftw_alloc_complex(static_cast<size_t>(ny) * nx);
  fftw_plan p = fftw_plan_dft_2d(ny, nx, buf, buf, sign, FFTW_ESTIMATE);
  fftw_free(buf);
  cache[{ny, nx, sign}] = p;
  return p;
}

struct FftwBuf {
  fftw_complex* p = nullptr;
  explicit FftwBuf(size_t n) : p(fftw_alloc_complex(n)) {
    if (!p) throw std::bad_alloc();
    for (size_t i = 0; i < n; ++i) p[i][0] = p[i][1] = 0.0;
  }
  ~FftwBuf() { fftw_free(p); }
  FftwBuf(const FftwBuf&) = delete;
  FftwBuf& operator=(const FftwBuf&) = delete;
  std::complex<double>* c() { return reinterpret_cast<std::complex<double>*>(p); }
};

void run_fft(fftw_plan plan, fftw_complex* data) { fftw_execute_dft(plan, data, data); }

}  // namespace

SpectralCube filter_H(const TransientCube& h, const PhasorKernelParams& p) {
  h.validate();
  const int T = h.T;
  const auto kernel = phasor_kernel(p, bin_centers(T, h.bin_width, h.t0));
  fftw_plan fwd = plan_1d(T, FFTW_FORWARD);

  FftwBuf buf(T);
  for (int i = 0; i < T; ++i) buf.c()[i] = kernel[i];
  run_fft(fwd, buf.p);
  std::vector<std::complex<double>> pk(buf.c(), buf.c() + T);
  derotate_spectrum(pk);

  // One-sided band: peak of |P| over [0, T/2], expanded while >= 1e-3 peak.
  const int khalf = T / 2;
  int kp = 0;
  for (int k = 1; k <= khalf; ++k)
    if (std::abs(pk[k]) > std::abs(pk[kp])) kp = k;
  const double thr = 1e-3 * std::abs(pk[kp]);
  int klo = kp, khi = kp;
  while (klo > 0 && std::abs(pk[klo - 1]) >= thr) --klo;
  while (khi < khalf && std::abs(pk[khi + 1]) >= thr) ++khi;

  SpectralCube out;
  out.L = h.L;
  out.S = h.S;
  out.T = T;
  out.k0 = klo;
  out.K = khi - klo + 1;
  out.bin_width = h.bin_width;
  out.confocal = h.confocal;
  out.values.resize(static_cast<size_t>(h.L) * h.S * out.K);
  for (int l = 0; l < h.L; ++l) {
    for (int s = 0; s < h.S; ++s) {
      const double* src = h.values.data() + (static_cast<size_t>(l) * h.S + s) * T;
      for (int i = 0; i < T; ++i) buf.c()[i] = src[i];
      run_fft(fwd, buf.p);
      // conj: the data spectrum carries positive-frequency phase e^{+i w t0}
      // so the e^{-i(w/c)r} backprojection kernel cancels it at the source
      for (int k = 0; k < out.K; ++k)
        out.at(l, s, k) = std::conj(buf.c()[klo + k]) * pk[klo + k];
    }
  }
  return out;
}

namespace {

struct WallLattice {
  int rows = 0, cols = 0;
  double x0 = 0, y0 = 0, z = 0;  // point (r, c) = (x0 + c px, y0 + r py, z)
  double px = 0, py = 0;
};

WallLattice lattice_of(const std::vector<Vec3>& pts, int rows, int cols,
                       const char* what) {
  if (rows < 1 || cols < 1 ||
      static_cast<int>(pts.size()) != rows * cols)
    throw std::invalid_argument(std::string("rsd_fft: bad grid dims for ") + what);
  WallLattice w;
  w.rows = rows;
  w.cols = cols;
  w.x0 = pts[0].x;
  w.y0 = pts[0].y;
  w.z = pts[0].z;
  w.px = cols > 1 ? pts[1].x - pts[0].x : 0;
  w.py = rows > 1 ? pts[cols].y - pts[0].y : 0;
  const double scale = std::max({std::abs(w.x0), std::abs(w.y0),
                                 std::abs(w.px) * cols, std::abs(w.py) * rows, 1.0});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec3& p = pts[r * cols + c];
      if (std::abs(p.x - (w.x0 + c * w.px)) > 1e-9 * scale ||
          std::abs(p.y - (w.y0 + r * w.py)) > 1e-9 * scale ||
          std::abs(p.z - w.z) > 1e-9 * scale)
        throw std::invalid_argument(
            std::string("rsd_fft: ") + what + " grid is not a regular lattice");
    }
  }
  if ((cols > 1 && w.px <= 0) || (rows > 1 && w.py <= 0))
    throw std::invalid_argument(std::string("rsd_fft: ") + what +
                                " lattice pitch must be positive");
  return w;
}

int lattice_offset(double target0, double lattice0, double pitch, const char* axis) {
  if (pitch <= 0)
    throw std::invalid_argument("rsd_fft: degenerate lattice pitch");
  const double raw = (target0 - lattice0) / pitch;
  const long o = std::lround(raw);
  if (std::abs(raw - o) > 1e-6)
    throw std::invalid_argument(
        std::string("rsd_fft: volume lattice not commensurate with wall along ") + axis);
  return static_cast<int>(o);
}

void check_pitch(double a, double b, const char* axis) {
  if (std::abs(a - b) > 1e-9 * std::max(std::abs(a), std::abs(b)))
    throw std::invalid_argument(
        std::string("rsd_fft: wall pitch differs from voxel pitch along ") + axis);
}

}  // namespace

std::vector<std::complex<double>> rsd_propagate_direct(const SpectralCube& hpf,
                                                       int k, const WallGrid& wall,
                                                       const SceneConfig& cfg) {
  const VolumeGrid shape = VolumeGrid::from_config(cfg);
  const double omega = hpf.omega(k);
  const double wc = omega / cfg.c;
  std::vector<std::complex<double>> field(shape.values.size());

  parallel_for(field.size(), [&](size_t vi) {
    const int z = static_cast<int>(vi) % shape.D;
    const int y = (static_cast<int>(vi) / shape.D) % shape.H;
    const int x = static_cast<int>(vi) / (shape.D * shape.H);
    const Vec3 xv = shape.voxel_center(x, y, z);
    std::complex<double> acc = 0;
    for (int s = 0; s < hpf.S; ++s) {
      const double d_vs = norm(xv - wall.sensor_points[s]);
      if (d_vs == 0) throw std::invalid_argument("rsd: voxel coincides with wall point");
      if (hpf.confocal) {
        acc += std::polar(1.0 / (d_vs * d_vs), -wc * 2.0 * d_vs) * hpf.at(0, s, k);
      } else {
        for (int l = 0; l < hpf.L; ++l) {
          const double d_lv = norm(xv - wall.laser_points[l]);
          if (d_lv == 0)
            throw std::invalid_argument("rsd: voxel coincides with wall point");
          acc += std::polar(1.0 / (d_lv * d_vs), -wc * (d_lv + d_vs)) * hpf.at(l, s, k);
        }
      }
    }
    field[vi] = acc;
  });
  return field;
}

std::vector<std::complex<double>> rsd_propagate_fft(const SpectralCube& hpf, int k,
                                                    const WallGrid& wall,
                                                    const SceneConfig& cfg) {
  if (std::abs(std::abs(wall.wall_normal.z) - 1.0) > 1e-12)
    throw std::invalid_argument("rsd_fft: wall must be parallel to the volume depth planes");
  const VolumeGrid shape = VolumeGrid::from_config(cfg);
  const WallLattice sl =
      lattice_of(wall.sensor_points, wall.sensor_rows, wall.sensor_cols, "sensor");
  check_pitch(sl.px, shape.pitch.x, "x");
  check_pitch(sl.py, shape.pitch.y, "y");
  const double vx0 = shape.origin.x + 0.5 * shape.pitch.x;
  const double vy0 = shape.origin.y + 0.5 * shape.pitch.y;
  const int ox = lattice_offset(vx0, sl.x0, sl.px, "x");
  const int oy = lattice_offset(vy0, sl.y0, sl.py, "y");

  const int W = shape.W, H = shape.H, D = shape.D;
  const int ndx = W + sl.cols - 1, ndy = H + sl.rows - 1;
  const int nx = sl.cols + ndx - 1, ny = sl.rows + ndy - 1;
  const int dmx0 = ox - (sl.cols - 1), dmy0 = oy - (sl.rows - 1);
  const size_t npix = static_cast<size_t>(nx) * ny;
  fftw_plan fwd = plan_2d(ny, nx, FFTW_FORWARD);
  fftw_plan bwd = plan_2d(ny, nx, FFTW_BACKWARD);
  const double omega = hpf.omega(k);
  const double wc = omega / cfg.c;
  const double inv_npix = 1.0 / static_cast<double>(npix);

  // FFT of each wall image once per frequency.
  const int L = hpf.confocal ? 1 : hpf.L;
  std::vector<std::vector<std::complex<double>>> ahat(L);
  {
    FftwBuf a(npix);
    for (int l = 0; l < L; ++l) {
      for (size_t i = 0; i < npix; ++i) a.c()[i] = 0;
      for (int r = 0; r < sl.rows; ++r)
        for (int c = 0; c < sl.cols; ++c)
          a.c()[static_cast<size_t>(r) * nx + c] = hpf.at(l, r * sl.cols + c, k);
      run_fft(fwd, a.p);
      ahat[l].assign(a.c(), a.c() + npix);
    }
  }

  std::vector<std::complex<double>> field(shape.values.size());
  parallel_for(D, [&](size_t z) {
    const double dz = shape.origin.z + (z + 0.5) * shape.pitch.z - sl.z;
    FftwBuf kern(npix);
    for (int my = 0; my < ndy; ++my) {
      const double dy = (dmy0 + my) * sl.py;
      for (int mx = 0; mx < ndx; ++mx) {
        const double dx = (dmx0 + mx) * sl.px;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (r == 0) throw std::invalid_argument("rsd: voxel coincides with wall point");
        kern.c()[static_cast<size_t>(my) * nx + mx] =
            hpf.confocal ? std::polar(1.0 / (r * r), -wc * 2.0 * r)
                         : std::polar(1.0 / r, -wc * r);
      }
    }
    run_fft(fwd, kern.p);
    std::vector<std::complex<double>> khat(kern.c(), kern.c() + npix);

    FftwBuf work(npix);
    for (int l = 0; l < L; ++l) {
      for (size_t i = 0; i < npix; ++i) work.c()[i] = ahat[l][i] * khat[i];
      run_fft(bwd, work.p);
      for (int y = 0; y < H; ++y) {
        const size_t row = static_cast<size_t>(y + sl.rows - 1) * nx + (sl.cols - 1);
        for (int x = 0; x < W; ++x) {
          std::complex<double> v = work.c()[row + x] * inv_npix;
          if (!hpf.confocal) {
            const Vec3 xv = shape.voxel_center(x, y, static_cast<int>(z));
            const double d_lv = norm(xv - wall.laser_points[l]);
            if (d_lv == 0)
              throw std::invalid_argument("rsd: voxel coincides with wall point");
            v *= std::polar(1.0 / d_lv, -wc * d_lv);
          }
          field[shape.index(x, y, static_cast<int>(z))] += v;
        }
      }
    }
  });
  return field;
}

namespace {

VolumeGrid accumulate_intensity(
    const SpectralCube& hpf, const WallGrid& wall, const SceneConfig& cfg,
    std::vector<std::complex<double>> (*prop)(const SpectralCube&, int,
                                              const WallGrid&, const SceneConfig&)) {
  wall.validate();
  cfg.validate();
  VolumeGrid out = VolumeGrid::from_config(cfg);
  std::vector<std::complex<double>> acc(out.values.size());
  for (int k = 0; k < hpf.K; ++k) {
    const auto f = prop(hpf, k, wall, cfg);
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += f[i];
  }
  for (size_t i = 0; i < acc.size(); ++i) out.values[i] = std::norm(acc[i]);
  return out;
}

}  // namespace

VolumeGrid rsd_direct(const SpectralCube& hpf, const WallGrid& wall,
                      const SceneConfig& cfg) {
  if (static_cast<int>(wall.sensor_points.size()) > 16 * 16 ||
      (!hpf.confocal && static_cast<int>(wall.laser_points.size()) > 16 * 16))
    throw std::invalid_argument("rsd_direct: wall exceeds the 16x16 oracle guard");
  const long voxels = static_cast<long>(cfg.volume_resolution[0]) *
                      cfg.volume_resolution[1] * cfg.volume_resolution[2];
  if (voxels > 32L * 32 * 32)
    throw std::invalid_argument("rsd_direct: volume exceeds the 32^3 oracle guard");
  return accumulate_intensity(hpf, wall, cfg, &rsd_propagate_direct);
}

VolumeGrid rsd_fft(const SpectralCube& hpf, const WallGrid& wall,
                   const SceneConfig& cfg) {
  return accumulate_intensity(hpf, wall, cfg, &rsd_propagate_fft);
}

Image2D max_project_xz(const VolumeGrid& v) {
  Image2D img;
  img.width = v.W;
  img.height = v.D;
  img.pixels.assign(static_cast<size_t>(v.W) * v.D,
                    -std::numeric_limits<double>::infinity());
  for (int x = 0; x < v.W; ++x)
    for (int y = 0; y < v.H; ++y)
      for (int z = 0; z < v.D; ++z)
        img.at(x, z) = std::max(img.at(x, z), v.values[v.index(x, y, z)]);
  return img;
}

VolumeGrid normalize_volume(const VolumeGrid& v) {
  double m = 0;
  for (double x : v.values) m = std::max(m, x);
  if (m <= 0) throw std::runtime_error("empty reconstruction");
  VolumeGrid out = v;
  for (double& x : out.values) x /= m;
  return out;
}

}  // namespace nlos
