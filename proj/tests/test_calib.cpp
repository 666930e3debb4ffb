#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "nlos/calib.hpp"
#include "nlos/rng.hpp"
#include "nlos/sensor.hpp"
#include "nlos/transient_render.hpp"

using namespace nlos;

namespace {

TriangleMesh make_quad(const Vec3& center, double half, double albedo) {
  TriangleMesh m;
  m.vertices = {center + Vec3{-half, -half, 0}, center + Vec3{half, -half, 0},
                center + Vec3{half, half, 0}, center + Vec3{-half, half, 0}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.albedo = {albedo, albedo};
  return m;
}

// 8x8 confocal wall, pitch 0.04, lattice-commensurate with a 12^3 volume of
// the same lateral pitch. Small enough that a full gradient is cheap.
SceneConfig small_cfg() {
  SceneConfig cfg;
  cfg.bin_width = 16e-12;
  cfg.num_bins = 256;
  cfg.volume_origin = {-0.24, -0.24, 0.2};
  cfg.volume_extent = {0.48, 0.48, 0.48};
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 12;
  cfg.hemisphere_resolution = 8;
  return cfg;
}

WallGrid small_wall() { return make_planar_wall(8, 8, 0.32, 0.32, {0, 0, 0}, true); }

TransientCube random_cube(int L, int S, int T, double bw, bool confocal,
                          uint64_t seed, double lo = 0.0, double hi = 1.0) {
  TransientCube h = TransientCube::zeros(L, S, T, confocal, bw);
  for (size_t i = 0; i < h.values.size(); ++i) {
    Rng r = Rng::keyed(seed, i);
    h.values[i] = lo + (hi - lo) * r.next_double();
  }
  return h;
}

VolumeGrid random_volume(const SceneConfig& cfg, uint64_t seed) {
  VolumeGrid v = VolumeGrid::from_config(cfg);
  for (size_t i = 0; i < v.values.size(); ++i) {
    Rng r = Rng::keyed(seed, i);
    v.values[i] = r.next_double();
  }
  return v;
}

// Measurement with a known ground-truth laser-sensor model, scaled so the
// data is O(1).
struct SmallScene {
  SceneConfig cfg;
  WallGrid wall;
  LaserSensorParams ls_true;
  TransientCube H;
};

SmallScene make_small_scene() {
  SmallScene sc;
  sc.cfg = small_cfg();
  sc.wall = small_wall();
  const TriangleMesh mesh = make_quad({0, 0, 0.45}, 0.16, 0.6);
  const TransientCube hr = render_mesh(mesh, sc.wall, sc.cfg);
  const double m = *std::max_element(hr.values.begin(), hr.values.end());
  REQUIRE(m > 0);
  sc.ls_true.I_l = sc.cfg.bin_width / m;  // kernel sums to ~1/m -> max(H) ~ 1
  sc.ls_true.sigma_ls = 2.0 * sc.cfg.bin_width;
  sc.ls_true.kappa_s = 0.5 / sc.cfg.bin_width;
  sc.ls_true.eta_s = 0.05;
  sc.H = apply_sensor(hr, sc.ls_true);
  return sc;
}

}  // namespace

TEST_CASE("loss vanishes for a perfect fit with flat regularizer inputs") {
  TransientCube h = random_cube(1, 4, 16, 16e-12, true, 11);
  SceneConfig cfg = small_cfg();
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 4;
  VolumeGrid ipf = VolumeGrid::from_config(cfg, 0.0);
  AlbedoGrid rho = VolumeGrid::from_config(cfg, 0.5);
  const LossBreakdown lb = loss(h, h, ipf, rho, 1e2, 5e-3, {0, 1, 2, 3});
  CHECK(lb.e_h == 0.0);
  CHECK(lb.e_ipf == 0.0);
  CHECK(lb.e_rho == 0.0);
  CHECK(lb.total == 0.0);
}

TEST_CASE("constant residual c gives e_h = c^2") {
  TransientCube h = random_cube(1, 4, 16, 16e-12, true, 12);
  TransientCube hR = h;
  for (double& v : hR.values) v += 0.5;
  SceneConfig cfg = small_cfg();
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 4;
  VolumeGrid ipf = VolumeGrid::from_config(cfg, 0.0);
  AlbedoGrid rho = VolumeGrid::from_config(cfg, 0.3);
  const LossBreakdown lb = loss(h, hR, ipf, rho, 1e2, 5e-3, {0, 1, 2, 3});
  CHECK(lb.e_h == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("e_rho is zero iff the albedo is laterally constant") {
  SceneConfig cfg = small_cfg();
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 4;
  TransientCube h = random_cube(1, 4, 16, 16e-12, true, 13);
  VolumeGrid ipf = VolumeGrid::from_config(cfg, 0.0);

  AlbedoGrid rho = VolumeGrid::from_config(cfg);
  // varies only in z: lateral forward differences all vanish
  for (int x = 0; x < rho.W; ++x)
    for (int y = 0; y < rho.H; ++y)
      for (int z = 0; z < rho.D; ++z) rho.at(x, y, z) = 0.1 * z;
  CHECK(loss(h, h, ipf, rho, 1e2, 5e-3, {0}).e_rho == 0.0);

  rho.at(2, 1, 0) += 0.25;
  CHECK(loss(h, h, ipf, rho, 1e2, 5e-3, {0}).e_rho > 0.0);
}

TEST_CASE("loss matches a straight-line reimplementation") {
  const double lambda1 = 1e2, lambda2 = 5e-3;
  SceneConfig cfg = small_cfg();
  cfg.volume_resolution[0] = 5;
  cfg.volume_resolution[1] = 4;
  cfg.volume_resolution[2] = 3;
  const int L = 2, S = 6, T = 32;
  TransientCube h = random_cube(L, S, T, 16e-12, false, 21);
  TransientCube hR = random_cube(L, S, T, 16e-12, false, 22);
  VolumeGrid ipf = random_volume(cfg, 23);
  AlbedoGrid rho = random_volume(cfg, 24);
  const std::vector<int> batch = {0, 2, 5};

  const LossBreakdown lb = loss(h, hR, ipf, rho, lambda1, lambda2, batch);

  double eh = 0;
  for (int s : batch)
    for (int l = 0; l < L; ++l)
      for (int t = 0; t < T; ++t) {
        const double d = h.at(l, s, t) - hR.at(l, s, t);
        eh += d * d;
      }
  eh /= static_cast<double>(batch.size()) * L * T;

  double ei = 0;
  for (int x = 0; x < ipf.W; ++x)
    for (int z = 0; z < ipf.D; ++z) {
      double mx = ipf.at(x, 0, z);
      for (int y = 1; y < ipf.H; ++y) mx = std::max(mx, ipf.at(x, y, z));
      ei += std::abs(mx);
    }
  ei *= lambda1 / (ipf.W * ipf.D);

  double er = 0;
  size_t cnt = 0;
  for (int x = 0; x < rho.W; ++x)
    for (int y = 0; y < rho.H; ++y)
      for (int z = 0; z < rho.D; ++z) {
        if (x + 1 < rho.W) {
          er += std::abs(rho.at(x + 1, y, z) - rho.at(x, y, z));
          ++cnt;
        }
        if (y + 1 < rho.H) {
          er += std::abs(rho.at(x, y + 1, z) - rho.at(x, y, z));
          ++cnt;
        }
      }
  er *= lambda2 / static_cast<double>(cnt);

  CHECK(lb.e_h == doctest::Approx(eh).epsilon(1e-12));
  CHECK(lb.e_ipf == doctest::Approx(ei).epsilon(1e-12));
  CHECK(lb.e_rho == doctest::Approx(er).epsilon(1e-12));
  CHECK(lb.total == doctest::Approx(eh + ei + er).epsilon(1e-12));
}

TEST_CASE("loss rejects malformed inputs") {
  TransientCube h = random_cube(1, 4, 16, 16e-12, true, 31);
  SceneConfig cfg = small_cfg();
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 4;
  VolumeGrid ipf = VolumeGrid::from_config(cfg, 0.0);
  AlbedoGrid rho = VolumeGrid::from_config(cfg, 0.5);
  CHECK_THROWS(loss(h, h, ipf, rho, 1e2, 5e-3, {}));
  CHECK_THROWS(loss(h, h, ipf, rho, 1e2, 5e-3, {4}));
  TransientCube bad = random_cube(1, 4, 17, 16e-12, true, 32);
  CHECK_THROWS(loss(h, bad, ipf, rho, 1e2, 5e-3, {0}));
}

TEST_CASE("default parameters follow the wall sampling") {
  const SceneConfig cfg = small_cfg();
  const WallGrid wall = small_wall();
  const ParamSet th = default_params(wall, cfg);
  const double wavelength = 2.0 * 0.04;
  CHECK(th.pf.omega_pf == doctest::Approx(2 * M_PI * cfg.c / wavelength).epsilon(1e-12));
  CHECK(th.pf.sigma_pf == doctest::Approx(2 * wavelength / cfg.c).epsilon(1e-12));
  CHECK(th.ls.I_l == 1.0);
  CHECK(th.ls.sigma_ls == doctest::Approx(2 * cfg.bin_width).epsilon(1e-15));
  CHECK(th.ls.kappa_s == doctest::Approx(0.5 / cfg.bin_width).epsilon(1e-15));
  CHECK(th.ls.eta_s == 0.0);
  REQUIRE(static_cast<int>(th.albedo.values.size()) == 12 * 12 * 12);
  for (double a : th.albedo.values) CHECK(a == 0.5);
}

TEST_CASE("sample_batch is deterministic, sorted and duplicate-free") {
  const auto b = sample_batch(64, 0.25, 99, 3);
  CHECK(static_cast<int>(b.size()) == 16);  // ceil(0.25 * 64)
  CHECK(std::is_sorted(b.begin(), b.end()));
  for (size_t i = 1; i < b.size(); ++i) CHECK(b[i] != b[i - 1]);
  for (int s : b) {
    CHECK(s >= 0);
    CHECK(s < 64);
  }
  CHECK(sample_batch(64, 0.25, 99, 3) == b);
  CHECK(sample_batch(64, 0.25, 99, 4) != b);
  CHECK(sample_batch(64, 0.25, 98, 3) != b);

  const auto full = sample_batch(10, 1.0, 7, 0);
  std::vector<int> want(10);
  for (int i = 0; i < 10; ++i) want[i] = i;
  CHECK(full == want);

  CHECK(static_cast<int>(sample_batch(7, 0.3, 1, 0).size()) == 3);  // ceil(2.1)
  CHECK(static_cast<int>(sample_batch(4, 1e-9, 1, 0).size()) == 1);
  CHECK_THROWS(sample_batch(0, 0.5, 1, 0));
}

TEST_CASE("step leaves parameters in place under a zero gradient") {
  ParamSet th;
  th.pf.omega_pf = 2.3e10;
  th.pf.sigma_pf = 5e-10;
  th.ls.I_l = 0.7;
  th.ls.sigma_ls = 3e-11;
  th.ls.kappa_s = 2e10;
  th.ls.eta_s = 0.1;
  th.albedo.values.assign(8, 0.4);
  OptState st;
  GradResult g;
  g.d_albedo.assign(8, 0.0);
  step(st, th, g);
  CHECK(th.pf.omega_pf == doctest::Approx(2.3e10).epsilon(1e-14));
  CHECK(th.pf.sigma_pf == doctest::Approx(5e-10).epsilon(1e-14));
  CHECK(th.ls.I_l == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(th.ls.sigma_ls == doctest::Approx(3e-11).epsilon(1e-14));
  CHECK(th.ls.kappa_s == doctest::Approx(2e10).epsilon(1e-14));
  CHECK(th.ls.eta_s == 0.1);
  for (double a : th.albedo.values) CHECK(a == 0.4);
  CHECK(st.iteration == 1);
}

TEST_CASE("a single step moves against the gradient") {
  ParamSet th;
  th.pf.omega_pf = th.pf.sigma_pf = th.ls.I_l = th.ls.sigma_ls = th.ls.kappa_s = 1.0;
  th.ls.eta_s = 0.5;
  th.albedo.values.assign(2, 0.5);
  OptState st;
  GradResult g;
  g.d_eta = 1.0;
  g.d_log_I = -1.0;
  g.d_albedo = {2.0, -2.0};
  step(st, th, g);
  CHECK(th.ls.eta_s < 0.5);
  CHECK(th.ls.I_l > 1.0);
  CHECK(th.albedo.values[0] < 0.5);
  CHECK(th.albedo.values[1] > 0.5);
  // untouched coordinates stay put
  CHECK(th.pf.omega_pf == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("step matches a reference Adam on a quadratic bowl") {
  // minimize (eta - 0.3)^2 through the eta coordinate only
  ParamSet th;
  th.pf.omega_pf = th.pf.sigma_pf = th.ls.I_l = th.ls.sigma_ls = th.ls.kappa_s = 1.0;
  th.ls.eta_s = 0.8;
  OptState st;

  double x = 0.8, m = 0, v = 0;
  for (int it = 1; it <= 500; ++it) {
    GradResult g;
    g.d_eta = 2.0 * (th.ls.eta_s - 0.3);
    step(st, th, g);

    const double gr = 2.0 * (x - 0.3);
    m = st.beta1 * m + (1 - st.beta1) * gr;
    v = st.beta2 * v + (1 - st.beta2) * gr * gr;
    const double mh = m / (1 - std::pow(st.beta1, it));
    const double vh = v / (1 - std::pow(st.beta2, it));
    x += -st.lr_scalar * mh / (std::sqrt(vh) + st.eps);

    REQUIRE(th.ls.eta_s == doctest::Approx(x).epsilon(1e-12));
  }
  CHECK(std::abs(th.ls.eta_s - 0.3) < 1e-6);
}

TEST_CASE("step keeps eta and albedo inside their bounds") {
  ParamSet th;
  th.pf.omega_pf = th.pf.sigma_pf = th.ls.I_l = th.ls.sigma_ls = th.ls.kappa_s = 1.0;
  th.ls.eta_s = 1e-4;
  th.albedo.values = {1e-4, 1.0 - 1e-4};
  OptState st;
  GradResult g;
  g.d_eta = 10.0;
  g.d_albedo = {10.0, -10.0};
  step(st, th, g);
  CHECK(th.ls.eta_s == 0.0);
  CHECK(th.albedo.values[0] == 0.0);
  CHECK(th.albedo.values[1] == 1.0);
  GradResult bad;
  bad.d_albedo.assign(3, 0.0);
  CHECK_THROWS(step(st, th, bad));
}

TEST_CASE("forward is deterministic across pipelines") {
  const SmallScene sc = make_small_scene();
  ParamSet th = default_params(sc.wall, sc.cfg);
  th.ls = sc.ls_true;

  Pipeline p1(sc.H, sc.wall, sc.cfg);
  Pipeline p2(sc.H, sc.wall, sc.cfg);
  const ForwardResult a = p1.forward(th);
  const ForwardResult b = p1.forward(th);
  const ForwardResult c = p2.forward(th);
  REQUIRE(a.hR.values.size() == b.hR.values.size());
  CHECK(a.hR.values == b.hR.values);
  CHECK(a.hR.values == c.hR.values);
  CHECK(a.ipf.values == c.ipf.values);
  CHECK(a.raw_max == c.raw_max);
  CHECK(a.k0 == c.k0);
  CHECK(a.K == c.K);
}

TEST_CASE("zero-hit surface turns the rendered transient into the offset") {
  SceneConfig cfg = small_cfg();
  cfg.num_bins = 64;
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 8;
  cfg.volume_extent = {0.32, 0.32, 0.32};
  cfg.hemisphere_resolution = 4;
  cfg.threshold = 2.0;  // normalized intensities never reach 2
  const WallGrid wall = make_planar_wall(4, 4, 0.16, 0.16, {0, 0, 0}, true);
  const TransientCube H = random_cube(1, 16, 64, cfg.bin_width, true, 41, 0.1, 1.0);

  ParamSet th = default_params(wall, cfg);
  th.ls.eta_s = 0.3;
  Pipeline pipe(H, wall, cfg);
  const ForwardResult fwd = pipe.forward(th);
  for (const SurfaceCell& cell : fwd.G.cells) CHECK(!cell.hit);
  for (double v : fwd.hR.values) CHECK(v == 0.3);
}

TEST_CASE("gradient vanishes at a synthetic stationary point") {
  // zero extracted hits: H_R is constant at eta, so with the regularizers off
  // the only live coordinate is eta, stationary at the batch mean of H
  SceneConfig cfg = small_cfg();
  cfg.num_bins = 64;
  cfg.volume_resolution[0] = cfg.volume_resolution[1] = cfg.volume_resolution[2] = 8;
  cfg.volume_extent = {0.32, 0.32, 0.32};
  cfg.hemisphere_resolution = 4;
  cfg.threshold = 2.0;
  const WallGrid wall = make_planar_wall(4, 4, 0.16, 0.16, {0, 0, 0}, true);
  const TransientCube H = random_cube(1, 16, 64, cfg.bin_width, true, 43, 0.1, 1.0);

  std::vector<int> batch(16);
  for (int i = 0; i < 16; ++i) batch[i] = i;
  double mean = 0;
  for (double v : H.values) mean += v;
  mean /= static_cast<double>(H.values.size());

  ParamSet th = default_params(wall, cfg);
  th.ls.eta_s = mean;
  Pipeline pipe(H, wall, cfg);
  pipe.lambda1 = 0;
  pipe.lambda2 = 0;
  const GradResult g = pipe.grad(th, batch);
  CHECK(g.d_log_omega == 0.0);
  CHECK(g.d_log_sigma_pf == 0.0);
  CHECK(g.d_log_I == 0.0);
  CHECK(g.d_log_sigma_ls == 0.0);
  CHECK(g.d_log_kappa == 0.0);
  CHECK(std::abs(g.d_eta) < 1e-10);
  for (double d : g.d_albedo) CHECK(d == 0.0);
}

TEST_CASE("forward is invariant to the measurement scale") {
  const SmallScene sc = make_small_scene();
  ParamSet th = default_params(sc.wall, sc.cfg);
  th.ls = sc.ls_true;

  TransientCube H2 = sc.H;
  for (double& v : H2.values) v *= 2.0;  // exact in floating point

  Pipeline pa(sc.H, sc.wall, sc.cfg);
  Pipeline pb(H2, sc.wall, sc.cfg);
  const ForwardResult a = pa.forward(th);
  const ForwardResult b = pb.forward(th);
  CHECK(a.ipf.values == b.ipf.values);
  REQUIRE(a.G.cells.size() == b.G.cells.size());
  for (size_t i = 0; i < a.G.cells.size(); ++i) {
    CHECK(a.G.cells[i].hit == b.G.cells[i].hit);
    CHECK(a.G.cells[i].d == b.G.cells[i].d);
    CHECK(a.G.cells[i].x_g.x == b.G.cells[i].x_g.x);
    CHECK(a.G.cells[i].n_g.z == b.G.cells[i].n_g.z);
  }
  CHECK(a.hR.values == b.hR.values);
}

TEST_CASE("analytic gradient matches finite differences under a freeze") {
  const SmallScene sc = make_small_scene();
  Pipeline pipe(sc.H, sc.wall, sc.cfg);

  for (int trial = 0; trial < 3; ++trial) {
    CAPTURE(trial);
    Rng rng = Rng::keyed(4321, trial);
    ParamSet th = default_params(sc.wall, sc.cfg);
    th.pf.omega_pf *= std::exp(0.05 * (2 * rng.next_double() - 1));
    th.pf.sigma_pf *= std::exp(0.05 * (2 * rng.next_double() - 1));
    th.ls.I_l = sc.ls_true.I_l * std::exp(0.2 * (2 * rng.next_double() - 1));
    th.ls.sigma_ls = sc.ls_true.sigma_ls * std::exp(0.2 * (2 * rng.next_double() - 1));
    th.ls.kappa_s = sc.ls_true.kappa_s * std::exp(0.2 * (2 * rng.next_double() - 1));
    th.ls.eta_s = 0.02 + 0.06 * rng.next_double();
    for (double& a : th.albedo.values) a = 0.3 + 0.4 * rng.next_double();

    const std::vector<int> batch = sample_batch(sc.H.S, 0.5, 77, trial);
    const Freeze fz = pipe.make_freeze(th);
    const GradResult g = pipe.grad(th, batch, &fz);

    auto total = [&](const ParamSet& t) {
      return pipe.loss_at(t, batch, &fz).total;
    };
    auto check = [&](double analytic, double fd, const char* name = "albedo") {
      const std::string nm = name;
      CAPTURE(nm);
      CAPTURE(analytic);
      CAPTURE(fd);
      const double tol = std::max(1e-3 * std::max(std::abs(analytic), std::abs(fd)), 1e-8);
      CHECK(std::abs(analytic - fd) <= tol);
    };
    // rel step 1e-4: for log coordinates a relative step in theta is an
    // absolute step in u
    auto fd_scalar = [&](auto&& set, double u, bool log_coord = true) {
      const double h = log_coord ? 1e-4 : 1e-4 * std::max(1e-2, std::abs(u));
      ParamSet tp = th, tm = th;
      set(tp, u + h);
      set(tm, u - h);
      return (total(tp) - total(tm)) / (2 * h);
    };

    check(g.d_log_omega,
          fd_scalar([](ParamSet& t, double u) { t.pf.omega_pf = std::exp(u); },
                    std::log(th.pf.omega_pf)), "log_omega");
    check(g.d_log_sigma_pf,
          fd_scalar([](ParamSet& t, double u) { t.pf.sigma_pf = std::exp(u); },
                    std::log(th.pf.sigma_pf)), "log_sigma_pf");
    check(g.d_log_I,
          fd_scalar([](ParamSet& t, double u) { t.ls.I_l = std::exp(u); },
                    std::log(th.ls.I_l)), "log_I");
    check(g.d_log_sigma_ls,
          fd_scalar([](ParamSet& t, double u) { t.ls.sigma_ls = std::exp(u); },
                    std::log(th.ls.sigma_ls)), "log_sigma_ls");
    check(g.d_log_kappa,
          fd_scalar([](ParamSet& t, double u) { t.ls.kappa_s = std::exp(u); },
                    std::log(th.ls.kappa_s)), "log_kappa");
    check(g.d_eta,
          fd_scalar([](ParamSet& t, double u) { t.ls.eta_s = u; }, th.ls.eta_s, false),
          "eta");

    std::set<size_t> voxels;
    Rng vr = Rng::keyed(555, trial);
    while (voxels.size() < 32)
      voxels.insert(vr.next_below(th.albedo.values.size()));
    for (size_t idx : voxels) {
      CAPTURE(idx);
      const double h = 1e-4 * th.albedo.values[idx];
      ParamSet tp = th, tm = th;
      tp.albedo.values[idx] += h;
      tm.albedo.values[idx] -= h;
      check(g.d_albedo[idx], (total(tp) - total(tm)) / (2 * h));
    }
  }
}

TEST_CASE("calibrate records one history row per iteration") {
  const SmallScene sc = make_small_scene();
  ParamSet th0 = default_params(sc.wall, sc.cfg);
  th0.ls = sc.ls_true;
  const CalibResult res = calibrate(sc.H, th0, sc.wall, sc.cfg, 1, 0.5, 5);
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].iter == 0);
  CHECK(res.history[0].sigma_ls == th0.ls.sigma_ls);
  CHECK(res.history[0].eta_s == th0.ls.eta_s);
  CHECK(res.history[0].loss.total >= 0);
  CHECK(!res.converged);
  CHECK_THROWS(calibrate(sc.H, th0, sc.wall, sc.cfg, 0, 0.5, 5));
}

TEST_CASE("calibrate is bit-identical for a fixed seed") {
  const SmallScene sc = make_small_scene();
  ParamSet th0 = default_params(sc.wall, sc.cfg);
  th0.ls = sc.ls_true;
  th0.ls.sigma_ls *= 1.5;

  const CalibResult a = calibrate(sc.H, th0, sc.wall, sc.cfg, 4, 0.5, 2024);
  const CalibResult b = calibrate(sc.H, th0, sc.wall, sc.cfg, 4, 0.5, 2024);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss.total == b.history[i].loss.total);
    CHECK(a.history[i].omega_pf == b.history[i].omega_pf);
    CHECK(a.history[i].sigma_pf == b.history[i].sigma_pf);
    CHECK(a.history[i].I_l == b.history[i].I_l);
    CHECK(a.history[i].sigma_ls == b.history[i].sigma_ls);
    CHECK(a.history[i].kappa_s == b.history[i].kappa_s);
    CHECK(a.history[i].eta_s == b.history[i].eta_s);
  }
  CHECK(a.theta.ls.sigma_ls == b.theta.ls.sigma_ls);
  CHECK(a.theta.albedo.values == b.theta.albedo.values);
  // the optimizer actually moved
  CHECK(a.theta.ls.sigma_ls != th0.ls.sigma_ls);
}
