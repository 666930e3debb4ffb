// Command-line front end: dataset synthesis, reconstruction, extraction,
// calibration, noise sweeps. Exit codes: 0 success, 2 input error,
// 3 numerical failure.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlos/calib.hpp"
#include "nlos/mesh.hpp"
#include "nlos/parallel.hpp"
#include "nlos/phasor.hpp"
#include "nlos/png_io.hpp"
#include "nlos/sensor.hpp"
#include "nlos/surface.hpp"
#include "nlos/transient_cube.hpp"
#include "nlos/transient_render.hpp"
#include "nlos/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nlos;

namespace {

std::string iso_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const fs::path& dir, json m) {
  m["format_versions"] = {{"nltc", 1}, {"manifest", 1}};
  m["timestamp"] = iso_now();
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << m.dump(2) << "\n";
}

json params_json(const ParamSet& th) {
  return {{"omega_pf", th.pf.omega_pf}, {"sigma_pf", th.pf.sigma_pf},
          {"I_l", th.ls.I_l},           {"sigma_ls", th.ls.sigma_ls},
          {"kappa_s", th.ls.kappa_s},   {"eta_s", th.ls.eta_s}};
}

void save_volume_outputs(const VolumeGrid& v, const fs::path& dir) {
  save_volume(v, (dir / "volume.raw").string(), (dir / "volume.json").string());
  save_png_gray(max_project_xz(v), (dir / "proj_xz.png").string());
}

// Depth and normal-z maps of the central sensor, for inspection.
void save_surface_pngs(const ImplicitSurface& G, const fs::path& dir) {
  const int s = G.num_sensors / 2;
  Image2D depth{G.n, G.n, std::vector<double>(static_cast<size_t>(G.n) * G.n, 0.0)};
  Image2D nz = depth;
  for (int iy = 0; iy < G.n; ++iy)
    for (int ix = 0; ix < G.n; ++ix) {
      const SurfaceCell& c = G.cell(s, ix, iy);
      if (!c.hit) continue;
      depth.at(ix, iy) = c.d;
      nz.at(ix, iy) = std::abs(c.n_g.z);
    }
  save_png_gray(depth, (dir / "depth.png").string());
  save_png_gray(nz, (dir / "normal_z.png").string());
}

void write_history_csv(const std::vector<CalibHistoryRow>& hist, const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write history CSV: " + p.string());
  out << "iteration,omega_pf,sigma_pf,I_l,sigma_ls,kappa_s,eta_s,e_h,e_ipf,e_rho,total\n";
  char line[512];
  for (const auto& r : hist) {
    std::snprintf(line, sizeof(line),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iter, r.omega_pf, r.sigma_pf, r.I_l, r.sigma_ls, r.kappa_s,
                  r.eta_s, r.loss.e_h, r.loss.e_ipf, r.loss.e_rho, r.loss.total);
    out << line;
  }
}

int classify(const std::exception& e) {
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  const std::string m = e.what();
  if (m.find("cannot open") != std::string::npos ||
      m.find("cannot write") != std::string::npos ||
      m.find("cannot read") != std::string::npos)
    return 2;
  return 3;
}

struct Common {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool need_config = true) {
  if (need_config)
    cmd->add_option("--config", c.config, "scene config file")->required();
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--threads", c.threads, "worker thread cap (0 = auto)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-calibrating NLOS inverse-rendering toolkit"};
  app.require_subcommand(1);

  // ---- render ------------------------------------------------------------
  Common rc;
  std::string mesh_path, albedo_path;
  double r_I = 1, r_sigma = -1, r_kappa = -1, r_eta = 0, r_noise = 0;
  bool r_no_occlusion = false;
  auto* render = app.add_subcommand("render", "synthesize a transient cube from a mesh");
  add_common(render, rc);
  render->add_option("--mesh", mesh_path, "OBJ mesh of the hidden geometry")->required();
  render->add_option("--albedo-json", albedo_path, "per-triangle albedo sidecar");
  render->add_option("--I-l", r_I, "laser intensity");
  render->add_option("--sigma-ls", r_sigma, "joint temporal width, seconds");
  render->add_option("--kappa-s", r_kappa, "sensor decay rate, 1/seconds");
  render->add_option("--eta-s", r_eta, "intensity offset");
  render->add_option("--noise-scale", r_noise, "Poisson photon scale (0 = clean)");
  render->add_flag("--no-occlusion", r_no_occlusion, "disable occlusion tests");

  // ---- reconstruct ---------------------------------------------------------
  Common cc;
  std::string cube_path;
  double c_omega = -1, c_sigma = -1;
  bool c_oracle = false;
  auto* rec = app.add_subcommand("reconstruct", "phasor-field RSD volume from a cube");
  add_common(rec, cc);
  rec->add_option("--cube", cube_path, "NLTC transient cube")->required();
  rec->add_option("--omega-pf", c_omega, "phasor central frequency, rad/s");
  rec->add_option("--sigma-pf", c_sigma, "phasor envelope width, seconds");
  rec->add_flag("--oracle", c_oracle, "use the direct-summation oracle path");

  // ---- extract -------------------------------------------------------------
  Common ec;
  std::string vol_raw, vol_meta;
  double e_beta = -1, e_thr = -1;
  int e_n = 0;
  auto* ext = app.add_subcommand("extract", "implicit surface from a volume");
  add_common(ext, ec);
  ext->add_option("--volume", vol_raw, "raw float32 volume")->required();
  ext->add_option("--volume-meta", vol_meta, "volume JSON sidecar")->required();
  ext->add_option("--beta", e_beta, "softargmax sharpness");
  ext->add_option("--threshold", e_thr, "hit threshold on normalized intensity");
  ext->add_option("--n", e_n, "hemisphere grid resolution override");

  // ---- calibrate -----------------------------------------------------------
  Common kc;
  std::string k_cube, k_init;
  int k_iters = 200;
  double k_batch = 0.25;
  double k_omega = -1, k_sigpf = -1, k_I = -1, k_sigls = -1, k_kappa = -1, k_eta = -1;
  auto* cal = app.add_subcommand("calibrate", "self-calibrate parameters on a cube");
  add_common(cal, kc);
  cal->add_option("--cube", k_cube, "NLTC transient cube")->required();
  cal->add_option("--iters", k_iters, "maximum iterations");
  cal->add_option("--batch-fraction", k_batch, "sensor fraction per iteration");
  cal->add_option("--init", k_init, "JSON file with initial parameter values");
  cal->add_option("--omega-pf", k_omega, "initial omega_pf override");
  cal->add_option("--sigma-pf", k_sigpf, "initial sigma_pf override");
  cal->add_option("--I-l", k_I, "initial I_l override");
  cal->add_option("--sigma-ls", k_sigls, "initial sigma_ls override");
  cal->add_option("--kappa-s", k_kappa, "initial kappa_s override");
  cal->add_option("--eta-s", k_eta, "initial eta_s override");

  // ---- noise-sweep ---------------------------------------------------------
  Common nc;
  std::string n_cube;
  std::vector<double> n_scales;
  double n_omega = -1, n_sigma = -1;
  auto* sweep = app.add_subcommand("noise-sweep", "SNR table across Poisson noise levels");
  add_common(sweep, nc);
  sweep->add_option("--cube", n_cube, "clean NLTC transient cube")->required();
  sweep->add_option("--scales", n_scales, "photon scales")->required()->delimiter(',');
  sweep->add_option("--omega-pf", n_omega, "phasor central frequency, rad/s");
  sweep->add_option("--sigma-pf", n_sigma, "phasor envelope width, seconds");

  // ---- info ----------------------------------------------------------------
  std::string i_cube;
  auto* info = app.add_subcommand("info", "print cube header information");
  info->add_option("--cube", i_cube, "NLTC transient cube")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*render) {
      set_thread_cap(rc.threads);
      const Scene scene = load_scene_config(rc.config);
      const TriangleMesh mesh = load_obj(mesh_path, albedo_path);
      ParamSet th = default_params(scene.wall, scene.cfg);
      th.ls.I_l = r_I;
      if (r_sigma > 0) th.ls.sigma_ls = r_sigma;
      if (r_kappa > 0) th.ls.kappa_s = r_kappa;
      th.ls.eta_s = r_eta;
      fs::create_directories(rc.out);
      RenderOptions opts;
      opts.occlusion = !r_no_occlusion;
      TransientCube cube = render_mesh(mesh, scene.wall, scene.cfg, opts);
      cube = apply_sensor(cube, th.ls);
      if (r_noise > 0) cube = add_poisson_noise(cube, r_noise, rc.seed);
      const fs::path dir(rc.out);
      save_cube(cube, (dir / "cube.nltc").string());
      save_cube_metadata(cube, (dir / "cube.json").string());
      write_manifest(dir, {{"command", "render"},
                           {"config", rc.config},
                           {"mesh", mesh_path},
                           {"seed", rc.seed},
                           {"threads", rc.threads},
                           {"noise_scale", r_noise},
                           {"occlusion", !r_no_occlusion},
                           {"parameters", params_json(th)},
                           {"outputs", {"cube.nltc", "cube.json"}}});
    } else if (*rec) {
      set_thread_cap(cc.threads);
      const Scene scene = load_scene_config(cc.config);
      const TransientCube cube = load_cube(cube_path);
      ParamSet th = default_params(scene.wall, scene.cfg);
      if (c_omega > 0) th.pf.omega_pf = c_omega;
      if (c_sigma > 0) th.pf.sigma_pf = c_sigma;
      const SpectralCube hpf = filter_H(cube, th.pf);
      const VolumeGrid raw = c_oracle ? rsd_direct(hpf, scene.wall, scene.cfg)
                                      : rsd_fft(hpf, scene.wall, scene.cfg);
      const VolumeGrid vol = normalize_volume(raw);
      fs::create_directories(cc.out);
      const fs::path dir(cc.out);
      save_volume_outputs(vol, dir);
      write_manifest(dir, {{"command", "reconstruct"},
                           {"config", cc.config},
                           {"cube", cube_path},
                           {"seed", cc.seed},
                           {"threads", cc.threads},
                           {"oracle", c_oracle},
                           {"parameters", params_json(th)},
                           {"outputs", {"volume.raw", "volume.json", "proj_xz.png"}}});
    } else if (*ext) {
      set_thread_cap(ec.threads);
      Scene scene = load_scene_config(ec.config);
      if (e_n > 0) scene.cfg.hemisphere_resolution = e_n;
      scene.cfg.validate();
      const VolumeGrid vol = load_volume(vol_raw, vol_meta);
      const double beta = e_beta > 0 ? e_beta : scene.cfg.beta;
      const double thr = e_thr >= 0 ? e_thr : scene.cfg.threshold;
      const ImplicitSurface G =
          extract_surface(vol, scene.wall, scene.cfg, beta, thr);
      const AlbedoGrid rho = VolumeGrid::from_config(scene.cfg, 1.0);
      fs::create_directories(ec.out);
      const fs::path dir(ec.out);
      export_pointcloud(G, rho, (dir / "points.ply").string());
      save_surface_pngs(G, dir);
      write_manifest(dir, {{"command", "extract"},
                           {"config", ec.config},
                           {"volume", vol_raw},
                           {"seed", ec.seed},
                           {"threads", ec.threads},
                           {"beta", beta},
                           {"threshold", thr},
                           {"n", scene.cfg.hemisphere_resolution},
                           {"outputs", {"points.ply", "depth.png", "normal_z.png"}}});
    } else if (*cal) {
      set_thread_cap(kc.threads);
      const Scene scene = load_scene_config(kc.config);
      const TransientCube cube = load_cube(k_cube);
      ParamSet th = default_params(scene.wall, scene.cfg);
      if (!k_init.empty()) {
        std::ifstream in(k_init);
        if (!in) throw std::runtime_error("cannot open init file: " + k_init);
        json j;
        in >> j;
        th.pf.omega_pf = j.value("omega_pf", th.pf.omega_pf);
        th.pf.sigma_pf = j.value("sigma_pf", th.pf.sigma_pf);
        th.ls.I_l = j.value("I_l", th.ls.I_l);
        th.ls.sigma_ls = j.value("sigma_ls", th.ls.sigma_ls);
        th.ls.kappa_s = j.value("kappa_s", th.ls.kappa_s);
        th.ls.eta_s = j.value("eta_s", th.ls.eta_s);
      }
      if (k_omega > 0) th.pf.omega_pf = k_omega;
      if (k_sigpf > 0) th.pf.sigma_pf = k_sigpf;
      if (k_I > 0) th.ls.I_l = k_I;
      if (k_sigls > 0) th.ls.sigma_ls = k_sigls;
      if (k_kappa > 0) th.ls.kappa_s = k_kappa;
      if (k_eta >= 0) th.ls.eta_s = k_eta;

      const CalibResult res =
          calibrate(cube, th, scene.wall, scene.cfg, k_iters, k_batch, kc.seed);
      fs::create_directories(kc.out);
      const fs::path dir(kc.out);
      {
        json j = params_json(res.theta);
        j["converged"] = res.converged;
        j["iterations"] = res.history.size();
        std::ofstream out(dir / "theta.json");
        out << j.dump(2) << "\n";
      }
      save_volume(res.theta.albedo, (dir / "albedo.raw").string(),
                  (dir / "albedo.json").string());
      write_history_csv(res.history, dir / "history.csv");
      const ForwardResult fin = forward(cube, res.theta, scene.wall, scene.cfg);
      save_volume_outputs(fin.ipf, dir);
      export_pointcloud(fin.G, res.theta.albedo, (dir / "points.ply").string());
      save_surface_pngs(fin.G, dir);
      write_manifest(dir, {{"command", "calibrate"},
                           {"config", kc.config},
                           {"cube", k_cube},
                           {"seed", kc.seed},
                           {"threads", kc.threads},
                           {"iters", k_iters},
                           {"batch_fraction", k_batch},
                           {"init", params_json(th)},
                           {"parameters", params_json(res.theta)},
                           {"converged", res.converged},
                           {"outputs",
                            {"theta.json", "albedo.raw", "albedo.json", "history.csv",
                             "points.ply", "volume.raw", "volume.json", "proj_xz.png",
                             "depth.png", "normal_z.png"}}});
    } else if (*sweep) {
      set_thread_cap(nc.threads);
      const Scene scene = load_scene_config(nc.config);
      const TransientCube clean = load_cube(n_cube);
      ParamSet th = default_params(scene.wall, scene.cfg);
      if (n_omega > 0) th.pf.omega_pf = n_omega;
      if (n_sigma > 0) th.pf.sigma_pf = n_sigma;
      fs::create_directories(nc.out);
      const fs::path dir(nc.out);
      std::ofstream csv(dir / "snr.csv");
      if (!csv) throw std::runtime_error("cannot write CSV in " + nc.out);
      csv << "scale,snr_db\n";
      json outputs = json::array({"snr.csv"});
      for (size_t i = 0; i < n_scales.size(); ++i) {
        const TransientCube noisy = add_poisson_noise(clean, n_scales[i], nc.seed);
        const double snr = snr_db(clean, noisy);
        char line[128];
        std::snprintf(line, sizeof(line), "%.17g,%.17g\n", n_scales[i], snr);
        csv << line;
        const VolumeGrid vol = normalize_volume(
            rsd_fft(filter_H(noisy, th.pf), scene.wall, scene.cfg));
        const std::string tag = "scale" + std::to_string(i);
        save_volume(vol, (dir / (tag + ".raw")).string(),
                    (dir / (tag + ".json")).string());
        save_png_gray(max_project_xz(vol), (dir / (tag + ".png")).string());
        outputs.push_back(tag + ".raw");
      }
      write_manifest(dir, {{"command", "noise-sweep"},
                           {"config", nc.config},
                           {"cube", n_cube},
                           {"seed", nc.seed},
                           {"threads", nc.threads},
                           {"scales", n_scales},
                           {"parameters", params_json(th)},
                           {"outputs", outputs}});
    } else if (*info) {
      const TransientCube cube = load_cube(i_cube);
      std::printf("L=%d S=%d T=%d confocal=%d bin_width=%.17g t0=%.17g\n", cube.L,
                  cube.S, cube.T, cube.confocal ? 1 : 0, cube.bin_width, cube.t0);
      std::printf("laser grid %dx%d, sensor grid %dx%d\n", cube.laser_rows,
                  cube.laser_cols, cube.sensor_rows, cube.sensor_cols);
      double lo = cube.values.empty() ? 0 : cube.values[0], hi = lo, sum = 0;
      for (double v : cube.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      std::printf("values min=%.17g max=%.17g mean=%.17g\n", lo, hi,
                  cube.values.empty() ? 0 : sum / cube.values.size());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return classify(e);
  }
  return 0;
}
