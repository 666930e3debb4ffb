#include "nlos/calib.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nlos/dual.hpp"
#include "nlos/parallel.hpp"
#include "nlos/rng.hpp"
#include "nlos/transient_render.hpp"

namespace nlos {

namespace {

void check_finite(const double* p, size_t n, const char* stage) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i]))
      throw std::runtime_error(std::string("non-finite gradient in ") + stage);
}

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// Plain forward c2c DFT (serial use only).
std::vector<std::complex<double>> dft(const std::vector<std::complex<double>>& in) {
  const int n = static_cast<int>(in.size());
  fftw_complex* buf = fftw_alloc_complex(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  auto* c = reinterpret_cast<std::complex<double>*>(buf);
  std::copy(in.begin(), in.end(), c);
  fftw_execute(plan);
  std::vector<std::complex<double>> out(c, c + n);
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return out;
}

}  // namespace

LossBreakdown loss(const TransientCube& H, const TransientCube& H_R,
                   const VolumeGrid& ipf, const AlbedoGrid& rho, double lambda1,
                   double lambda2, const std::vector<int>& batch_sensors) {
  if (!H.same_shape(H_R)) throw std::invalid_argument("loss: cube shape mismatch");
  if (rho.W != ipf.W || rho.H != ipf.H || rho.D != ipf.D)
    throw std::invalid_argument("loss: grid shape mismatch");
  if (batch_sensors.empty()) throw std::invalid_argument("loss: empty batch");
  LossBreakdown lb;
  lb.lambda1 = lambda1;
  lb.lambda2 = lambda2;

  double acc = 0;
  for (int s : batch_sensors) {
    if (s < 0 || s >= H.S) throw std::invalid_argument("loss: batch index out of range");
    for (int l = 0; l < H.L; ++l) {
      const size_t row = (static_cast<size_t>(l) * H.S + s) * H.T;
      for (int t = 0; t < H.T; ++t) {
        const double d = H.values[row + t] - H_R.values[row + t];
        acc += d * d;
      }
    }
  }
  lb.e_h = acc / (static_cast<double>(batch_sensors.size()) * H.L * H.T);

  const Image2D proj = max_project_xz(ipf);
  double pacc = 0;
  for (double p : proj.pixels) pacc += std::abs(p);
  lb.e_ipf = lambda1 * pacc / (static_cast<double>(proj.width) * proj.height);

  double racc = 0;
  size_t cnt = 0;
  for (int x = 0; x + 1 < rho.W; ++x)
    for (int y = 0; y < rho.H; ++y)
      for (int z = 0; z < rho.D; ++z, ++cnt)
        racc += std::abs(rho.at(x + 1, y, z) - rho.at(x, y, z));
  for (int x = 0; x < rho.W; ++x)
    for (int y = 0; y + 1 < rho.H; ++y)
      for (int z = 0; z < rho.D; ++z, ++cnt)
        racc += std::abs(rho.at(x, y + 1, z) - rho.at(x, y, z));
  lb.e_rho = cnt ? lambda2 * racc / static_cast<double>(cnt) : 0.0;

  lb.total = lb.e_h + lb.e_ipf + lb.e_rho;
  return lb;
}

Pipeline::Pipeline(const TransientCube& H, const WallGrid& wall,
                   const SceneConfig& cfg)
    : H_(H), wall_(wall), cfg_(cfg) {
  H_.validate();
  wall_.validate();
  cfg_.validate();
  khalf_ = H_.T / 2;
  spectrum_.resize(static_cast<size_t>(H_.L) * H_.S * (khalf_ + 1));

  fftw_complex* buf = fftw_alloc_complex(H_.T);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan = fftw_plan_dft_1d(H_.T, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  auto* c = reinterpret_cast<std::complex<double>*>(buf);
  for (int l = 0; l < H_.L; ++l) {
    for (int s = 0; s < H_.S; ++s) {
      const double* src = H_.values.data() + (static_cast<size_t>(l) * H_.S + s) * H_.T;
      for (int t = 0; t < H_.T; ++t) c[t] = src[t];
      fftw_execute(plan);
      std::complex<double>* dst =
          spectrum_.data() + (static_cast<size_t>(l) * H_.S + s) * (khalf_ + 1);
      // conjugated: positive-frequency phase convention, mirrors filter_H
      for (int k = 0; k <= khalf_; ++k) dst[k] = std::conj(c[k]);
    }
  }
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
}

Pipeline::Band Pipeline::band_of(const PhasorKernelParams& p, const Freeze* fz) const {
  const auto kernel = phasor_kernel(p, bin_centers(H_.T, H_.bin_width, H_.t0));
  auto pkfull = dft(kernel);
  derotate_spectrum(pkfull);
  Band b;
  if (fz) {
    b.k0 = fz->k0;
    b.K = fz->K;
  } else {
    int kp = 0;
    for (int k = 1; k <= khalf_; ++k)
      if (std::abs(pkfull[k]) > std::abs(pkfull[kp])) kp = k;
    const double thr = 1e-3 * std::abs(pkfull[kp]);
    int klo = kp, khi = kp;
    while (klo > 0 && std::abs(pkfull[klo - 1]) >= thr) --klo;
    while (khi < khalf_ && std::abs(pkfull[khi + 1]) >= thr) ++khi;
    b.k0 = klo;
    b.K = khi - klo + 1;
  }
  b.pk.assign(pkfull.begin() + b.k0, pkfull.begin() + b.k0 + b.K);
  return b;
}

const std::vector<std::complex<double>>& Pipeline::field_for_bin(int k) const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto it = cache_.find(k);
  if (it != cache_.end()) return it->second;
  SpectralCube one;
  one.L = H_.L;
  one.S = H_.S;
  one.k0 = k;
  one.K = 1;
  one.T = H_.T;
  one.bin_width = H_.bin_width;
  one.confocal = H_.confocal;
  one.values.resize(static_cast<size_t>(H_.L) * H_.S);
  for (int l = 0; l < H_.L; ++l)
    for (int s = 0; s < H_.S; ++s)
      one.values[static_cast<size_t>(l) * H_.S + s] =
          spectrum_[(static_cast<size_t>(l) * H_.S + s) * (khalf_ + 1) + k];
  return cache_.emplace(k, rsd_propagate_fft(one, 0, wall_, cfg_)).first->second;
}

std::vector<std::complex<double>> Pipeline::complex_field(const Band& b) const {
  std::vector<std::complex<double>> f;
  for (int k = 0; k < b.K; ++k) {
    const auto& fk = field_for_bin(b.k0 + k);
    if (f.empty()) f.assign(fk.size(), 0.0);
    for (size_t i = 0; i < f.size(); ++i) f[i] += b.pk[k] * fk[i];
  }
  return f;
}

ForwardResult Pipeline::forward(const ParamSet& theta, const Freeze* fz) const {
  theta.pf.validate();
  theta.ls.validate();
  const Band b = band_of(theta.pf, fz);
  const auto f = complex_field(b);

  ForwardResult r;
  r.k0 = b.k0;
  r.K = b.K;
  r.ipf = VolumeGrid::from_config(cfg_);
  double m = 0;
  for (size_t i = 0; i < f.size(); ++i) {
    r.ipf.values[i] = std::norm(f[i]);
    m = std::max(m, r.ipf.values[i]);
  }
  if (m <= 0) throw std::runtime_error("empty reconstruction");
  for (double& v : r.ipf.values) v /= m;
  r.raw_max = m;

  r.G = extract_surface(r.ipf, wall_, cfg_, cfg_.beta, cfg_.threshold,
                        fz ? &fz->hits : nullptr);
  r.hr = render_implicit(r.G, theta.albedo, wall_, cfg_);
  const int support =
      fz ? fz->support_bins : default_support_bins(theta.ls, H_.bin_width);
  r.hR = apply_sensor(r.hr, theta.ls, support);
  return r;
}

Freeze Pipeline::make_freeze(const ParamSet& theta) const {
  const ForwardResult r = forward(theta);
  Freeze fz;
  fz.k0 = r.k0;
  fz.K = r.K;
  fz.support_bins = default_support_bins(theta.ls, H_.bin_width);
  fz.hits.hit.resize(r.G.cells.size());
  for (size_t i = 0; i < r.G.cells.size(); ++i) fz.hits.hit[i] = r.G.cells[i].hit;
  return fz;
}

LossBreakdown Pipeline::loss_at(const ParamSet& theta,
                                const std::vector<int>& batch_sensors,
                                const Freeze* fz) const {
  const ForwardResult r = forward(theta, fz);
  return loss(H_, r.hR, r.ipf, theta.albedo, lambda1, lambda2, batch_sensors);
}

namespace {

using D5 = Dual<5>;
using TV = TVec3<D5>;

TV dual_point(const Vec3& x_s, const Vec3& dir, const D5& d) {
  return {x_s.x + dir.x * d, x_s.y + dir.y * d, x_s.z + dir.z * d};
}

// Mirrors estimate_normals for one interior cell, with the four neighbor
// depths carried as dual slots 1..4 (N, S, E, W).
TV dual_normal(const Vec3& x_s, const HemisphereGrid& grid, int ix, int iy,
               const D5& dn, const D5& ds, const D5& de, const D5& dw,
               bool* fallback) {
  const Vec3 dir = grid.at(ix, iy);
  const TV pn = dual_point(x_s, grid.at(ix, iy + 1), dn);
  const TV ps = dual_point(x_s, grid.at(ix, iy - 1), ds);
  const TV pe = dual_point(x_s, grid.at(ix + 1, iy), de);
  const TV pw = dual_point(x_s, grid.at(ix - 1, iy), dw);
  TV n1 = tcross(pe - pn, ps - pn);
  TV n2 = tcross(pw - ps, pn - ps);
  const D5 l1 = tnorm(n1), l2 = tnorm(n2);
  *fallback = true;
  if (l1.v > 1e-15 && l2.v > 1e-15) {
    n1 = n1 / l1;
    n2 = n2 / l2;
    if (tdot(n1, dir).v > 0) n1 = -n1;
    if (tdot(n2, dir).v > 0) n2 = -n2;
    const TV sum = n1 + n2;
    const D5 ls = tnorm(sum);
    if (ls.v > 1e-15) {
      *fallback = false;
      return sum / ls;
    }
  }
  return {D5(-dir.x), D5(-dir.y), D5(-dir.z)};
}

}  // namespace

GradResult Pipeline::grad(const ParamSet& theta, const std::vector<int>& batch,
                          const Freeze* fz) const {
  if (batch.empty()) throw std::invalid_argument("grad: empty batch");
  const ForwardResult fwd = forward(theta, fz);
  const int L = H_.L, S = H_.S, T = H_.T;
  const int n = cfg_.hemisphere_resolution;
  const double bw = H_.bin_width;
  const int support =
      fz ? fz->support_bins : default_support_bins(theta.ls, bw);
  const PsiKernelDerivs psi = psi_kernel_derivs(theta.ls, bw, support);
  const int sb = support;

  GradResult g;
  g.d_albedo.assign(theta.albedo.values.size(), 0.0);

  // --- sensor-model adjoint ---------------------------------------------
  const double N = static_cast<double>(batch.size()) * L * T;
  std::vector<double> g_R(static_cast<size_t>(L) * S * T, 0.0);
  for (int s : batch) {
    for (int l = 0; l < L; ++l) {
      const size_t row = (static_cast<size_t>(l) * S + s) * T;
      for (int t = 0; t < T; ++t) {
        g.d_eta += g_R[row + t] =
            -2.0 * (H_.values[row + t] - fwd.hR.values[row + t]) / N;
      }
    }
  }
  std::vector<double> d_psi(2 * sb + 1, 0.0);
  std::vector<double> g_r(g_R.size(), 0.0);
  for (int s : batch) {
    for (int l = 0; l < L; ++l) {
      const size_t row = (static_cast<size_t>(l) * S + s) * T;
      for (int t = 0; t < T; ++t) {
        const double gr = g_R[row + t];
        if (gr == 0) continue;
        const int jlo = std::max(-sb, t - (T - 1));
        const int jhi = std::min(sb, t);
        for (int j = jlo; j <= jhi; ++j) {
          d_psi[j + sb] += gr * fwd.hr.values[row + t - j];
          g_r[row + t - j] += psi.kernel[j + sb] * gr;
        }
      }
    }
  }
  for (int j = 0; j <= 2 * sb; ++j) {
    g.d_log_I += d_psi[j] * psi.kernel[j];
    g.d_log_sigma_ls += d_psi[j] * psi.d_log_sigma[j];
    g.d_log_kappa += d_psi[j] * psi.d_log_kappa[j];
  }
  check_finite(&g.d_log_I, 1, "sensor adjoint");
  check_finite(&g.d_log_sigma_ls, 1, "sensor adjoint");
  check_finite(&g.d_log_kappa, 1, "sensor adjoint");
  check_finite(&g.d_eta, 1, "sensor adjoint");

  // --- render + extraction adjoint over batch sensors --------------------
  const VolumeGrid& ipf = fwd.ipf;
  const size_t nvox = ipf.values.size();
  std::vector<double> g_in(nvox, 0.0);  // adjoint of the normalized volume
  const double step = cfg_.effective_ray_step();
  const double beta = cfg_.beta;

  const int nblocks = static_cast<int>(std::min<size_t>(32, batch.size()));
  std::vector<std::vector<double>> block_a(nblocks), block_i(nblocks);
  for (auto& v : block_a) v.assign(nvox, 0.0);
  for (auto& v : block_i) v.assign(nvox, 0.0);

  parallel_for(nblocks, [&](size_t blk) {
    std::vector<double>& ga = block_a[blk];
    std::vector<double>& gi = block_i[blk];
    std::vector<double> gd(static_cast<size_t>(n) * n);
    for (size_t bi = blk; bi < batch.size(); bi += nblocks) {
      const int s = batch[bi];
      const Vec3 x_s = wall_.sensor_points[s];
      std::fill(gd.begin(), gd.end(), 0.0);
      const SurfaceCell* cells = fwd.G.cells.data() + static_cast<size_t>(s) * n * n;

      for (int iy = 0; iy < n; ++iy) {
        for (int ix = 0; ix < n; ++ix) {
          const int i = fwd.G.grid.index(ix, iy);
          const SurfaceCell& c = cells[i];
          if (!c.hit) continue;
          const Vec3 dir = fwd.G.grid.dirs[i];

          D5 dc = D5::var(c.d, 0);
          TV n_g;
          bool fallback = true;
          if (!c.fallback_normal) {
            n_g = dual_normal(x_s, fwd.G.grid, ix, iy,
                              D5::var(cells[fwd.G.grid.index(ix, iy + 1)].d, 1),
                              D5::var(cells[fwd.G.grid.index(ix, iy - 1)].d, 2),
                              D5::var(cells[fwd.G.grid.index(ix + 1, iy)].d, 3),
                              D5::var(cells[fwd.G.grid.index(ix - 1, iy)].d, 4),
                              &fallback);
          }
          if (fallback) n_g = {D5(-dir.x), D5(-dir.y), D5(-dir.z)};

          const TV x_g = dual_point(x_s, dir, dc);
          const D5 a = clamp01(trilinear_t<D5>(theta.albedo, x_g));
          D5 e(0.0);
          double d_e_d_albedo = 0;  // dE/da at fixed geometry
          for (int l = 0; l < L; ++l) {
            const Vec3 x_l = wall_.confocal ? x_s : wall_.laser_points[l];
            const D5 tput = throughput_t<D5>(x_l, x_s, x_g, n_g, wall_.wall_normal);
            const D5 t = (tnorm(x_g - x_l) + tnorm(x_s - x_g)) / cfg_.c;
            const D5 val = a * tput;
            const size_t row = (static_cast<size_t>(l) * S + s) * T;
            for (const auto& [bin, w] :
                 bin_weights_t<D5>(t, T, bw, 0.0, cfg_.sigma_t_bins)) {
              const double gr = g_r[row + bin];
              if (gr == 0) continue;
              e += gr * (val * w);
              d_e_d_albedo += gr * (tput.v * w.v);
            }
          }
          gd[i] += e.d[0];
          if (!fallback) {
            gd[fwd.G.grid.index(ix, iy + 1)] += e.d[1];
            gd[fwd.G.grid.index(ix, iy - 1)] += e.d[2];
            gd[fwd.G.grid.index(ix + 1, iy)] += e.d[3];
            gd[fwd.G.grid.index(ix - 1, iy)] += e.d[4];
          }
          // albedo scatter (clamp is inactive strictly inside [0,1])
          if (a.v > 0 && a.v < 1 && d_e_d_albedo != 0) {
            const Vec3 xg_v{x_g.x.v, x_g.y.v, x_g.z.v};
            const TrilinearStencil st = trilinear_stencil(theta.albedo, xg_v);
            if (st.inside)
              for (int q = 0; q < 8; ++q) ga[st.idx[q]] += d_e_d_albedo * st.w[q];
          }
        }
      }

      // softargmax adjoint: scatter depth adjoints back onto the volume.
      for (int i = 0; i < n * n; ++i) {
        if (!cells[i].hit || gd[i] == 0) continue;
        const Vec3 dir = fwd.G.grid.dirs[i];
        const auto samples = ray_march(ipf, x_s, dir, step);
        double max_i = samples.empty() ? 0 : samples[0].intensity;
        for (const auto& sm : samples) max_i = std::max(max_i, sm.intensity);
        double den = 0, num = 0;
        for (const auto& sm : samples) {
          const double w = std::exp(beta * (sm.intensity - max_i));
          num += w * sm.d;
          den += w;
        }
        const double dval = num / den;
        for (const auto& sm : samples) {
          const double w = std::exp(beta * (sm.intensity - max_i));
          const double gI = gd[i] * beta * w * (sm.d - dval) / den;
          if (gI == 0) continue;
          const TrilinearStencil st = trilinear_stencil(ipf, x_s + dir * sm.d);
          if (st.inside)
            for (int q = 0; q < 8; ++q) gi[st.idx[q]] += gI * st.w[q];
        }
      }
    }
  });
  for (int blk = 0; blk < nblocks; ++blk) {
    for (size_t i = 0; i < nvox; ++i) {
      g.d_albedo[i] += block_a[blk][i];
      g_in[i] += block_i[blk][i];
    }
  }
  check_finite(g.d_albedo.data(), g.d_albedo.size(), "render adjoint");
  check_finite(g_in.data(), g_in.size(), "render adjoint");

  // --- E_rho: forward-difference TV on the albedo ------------------------
  {
    const AlbedoGrid& rho = theta.albedo;
    size_t cnt = static_cast<size_t>(std::max(rho.W - 1, 0)) * rho.H * rho.D +
                 static_cast<size_t>(rho.W) * std::max(rho.H - 1, 0) * rho.D;
    const double scale = cnt ? lambda2 / static_cast<double>(cnt) : 0.0;
    for (int x = 0; x + 1 < rho.W; ++x)
      for (int y = 0; y < rho.H; ++y)
        for (int z = 0; z < rho.D; ++z) {
          const double d = rho.at(x + 1, y, z) - rho.at(x, y, z);
          const double sg = d > 0 ? scale : (d < 0 ? -scale : 0.0);
          g.d_albedo[rho.index(x + 1, y, z)] += sg;
          g.d_albedo[rho.index(x, y, z)] -= sg;
        }
    for (int x = 0; x < rho.W; ++x)
      for (int y = 0; y + 1 < rho.H; ++y)
        for (int z = 0; z < rho.D; ++z) {
          const double d = rho.at(x, y + 1, z) - rho.at(x, y, z);
          const double sg = d > 0 ? scale : (d < 0 ? -scale : 0.0);
          g.d_albedo[rho.index(x, y + 1, z)] += sg;
          g.d_albedo[rho.index(x, y, z)] -= sg;
        }
  }

  // --- E_Ipf: max projection onto xz -------------------------------------
  {
    const double scale = lambda1 / (static_cast<double>(ipf.W) * ipf.D);
    for (int x = 0; x < ipf.W; ++x)
      for (int z = 0; z < ipf.D; ++z) {
        int ybest = 0;
        for (int y = 1; y < ipf.H; ++y)
          if (ipf.at(x, y, z) > ipf.at(x, ybest, z)) ybest = y;
        if (ipf.at(x, ybest, z) > 0) g_in[ipf.index(x, ybest, z)] += scale;
      }
  }

  // --- normalization adjoint ---------------------------------------------
  const double m = fwd.raw_max;
  size_t vstar = 0;
  for (size_t i = 0; i < nvox; ++i)
    if (ipf.values[i] == 1.0) {
      vstar = i;
      break;
    }
  double pull = 0;
  for (size_t i = 0; i < nvox; ++i) pull += g_in[i] * ipf.values[i];
  std::vector<double> g_raw(nvox);
  for (size_t i = 0; i < nvox; ++i) g_raw[i] = g_in[i] / m;
  g_raw[vstar] -= pull / m;
  check_finite(g_raw.data(), nvox, "extraction adjoint");

  // --- phasor-kernel adjoint through |F|^2 --------------------------------
  {
    const Band b = band_of(theta.pf, fz);
    const auto f = complex_field(b);
    std::vector<std::complex<double>> s_k(b.K, 0.0);
    for (int k = 0; k < b.K; ++k) {
      const auto& fk = field_for_bin(b.k0 + k);
      std::complex<double> acc = 0;
      for (size_t i = 0; i < nvox; ++i) {
        if (g_raw[i] == 0) continue;
        acc += 2.0 * g_raw[i] * std::conj(f[i]) * fk[i];
      }
      s_k[k] = acc;
    }
    // d kernel / d log-params, pushed through the same DFT.
    const auto t_grid = bin_centers(T, bw, H_.t0);
    const double t_mid = 0.5 * (t_grid.front() + t_grid.back());
    const auto kern = phasor_kernel(theta.pf, t_grid);
    std::vector<std::complex<double>> d_omega(T), d_sigma(T);
    for (int j = 0; j < T; ++j) {
      const double t = t_grid[j] - t_mid;
      d_omega[j] = std::complex<double>(0.0, theta.pf.omega_pf * t) * kern[j];
      d_sigma[j] = (t * t / (theta.pf.sigma_pf * theta.pf.sigma_pf)) * kern[j];
    }
    auto dw = dft(d_omega);
    auto ds = dft(d_sigma);
    derotate_spectrum(dw);
    derotate_spectrum(ds);
    for (int k = 0; k < b.K; ++k) {
      g.d_log_omega += (dw[b.k0 + k] * s_k[k]).real();
      g.d_log_sigma_pf += (ds[b.k0 + k] * s_k[k]).real();
    }
    check_finite(&g.d_log_omega, 1, "phasor adjoint");
    check_finite(&g.d_log_sigma_pf, 1, "phasor adjoint");
  }
  return g;
}

ForwardResult forward(const TransientCube& H, const ParamSet& theta,
                      const WallGrid& wall, const SceneConfig& cfg) {
  return Pipeline(H, wall, cfg).forward(theta);
}

GradResult grad(const TransientCube& H, const ParamSet& theta, const WallGrid& wall,
                const SceneConfig& cfg, const std::vector<int>& batch_sensors) {
  return Pipeline(H, wall, cfg).grad(theta, batch_sensors);
}

namespace {

double adam_delta(double& m, double& v, double g, double lr, const OptState& st) {
  m = st.beta1 * m + (1 - st.beta1) * g;
  v = st.beta2 * v + (1 - st.beta2) * g * g;
  const double mh = m / (1 - std::pow(st.beta1, st.iteration));
  const double vh = v / (1 - std::pow(st.beta2, st.iteration));
  return -lr * mh / (std::sqrt(vh) + st.eps);
}

}  // namespace

void step(OptState& state, ParamSet& theta, const GradResult& g) {
  if (state.m_a.size() != theta.albedo.values.size()) {
    state.m_a.assign(theta.albedo.values.size(), 0.0);
    state.v_a.assign(theta.albedo.values.size(), 0.0);
  }
  if (g.d_albedo.size() != theta.albedo.values.size())
    throw std::invalid_argument("step: albedo gradient shape mismatch");
  state.iteration += 1;

  double u[6] = {std::log(theta.pf.omega_pf), std::log(theta.pf.sigma_pf),
                 std::log(theta.ls.I_l),      std::log(theta.ls.sigma_ls),
                 std::log(theta.ls.kappa_s),  theta.ls.eta_s};
  const double gs[6] = {g.d_log_omega, g.d_log_sigma_pf, g.d_log_I,
                        g.d_log_sigma_ls, g.d_log_kappa, g.d_eta};
  for (int i = 0; i < 6; ++i)
    u[i] += adam_delta(state.m[i], state.v[i], gs[i], state.lr_scalar, state);
  theta.pf.omega_pf = std::exp(u[0]);
  theta.pf.sigma_pf = std::exp(u[1]);
  theta.ls.I_l = std::exp(u[2]);
  theta.ls.sigma_ls = std::exp(u[3]);
  theta.ls.kappa_s = std::exp(u[4]);
  theta.ls.eta_s = std::max(0.0, u[5]);

  for (size_t i = 0; i < theta.albedo.values.size(); ++i) {
    double a = theta.albedo.values[i] +
               adam_delta(state.m_a[i], state.v_a[i], g.d_albedo[i],
                          state.lr_albedo, state);
    theta.albedo.values[i] = a < 0 ? 0.0 : (a > 1 ? 1.0 : a);
  }
}

std::vector<int> sample_batch(int num_sensors, double fraction, uint64_t seed,
                              int iter) {
  if (num_sensors < 1) throw std::invalid_argument("sample_batch: no sensors");
  int count = static_cast<int>(std::ceil(fraction * num_sensors));
  count = std::max(1, std::min(count, num_sensors));
  std::vector<int> idx(num_sensors);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::keyed(seed, static_cast<uint64_t>(iter));
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.next_below(num_sensors - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ParamSet default_params(const WallGrid& wall, const SceneConfig& cfg) {
  ParamSet th;
  const double pitch = wall.sensor_points.size() > 1
                           ? norm(wall.sensor_points[1] - wall.sensor_points[0])
                           : cfg.voxel_pitch().x;
  const double wavelength = 2.0 * pitch;  // wall-sampling Nyquist
  th.pf.omega_pf = 2.0 * M_PI * cfg.c / wavelength;
  th.pf.sigma_pf = 2.0 * (2.0 * M_PI / th.pf.omega_pf);
  th.ls.I_l = 1.0;
  th.ls.sigma_ls = 2.0 * cfg.bin_width;
  th.ls.kappa_s = 1.0 / (2.0 * cfg.bin_width);
  th.ls.eta_s = 0.0;
  th.albedo = VolumeGrid::from_config(cfg, 0.5);
  return th;
}

CalibResult calibrate(const TransientCube& H, const ParamSet& theta0,
                      const WallGrid& wall, const SceneConfig& cfg, int max_iters,
                      double batch_fraction, uint64_t seed) {
  if (max_iters < 1) throw std::invalid_argument("calibrate: max_iters must be >= 1");
  Pipeline pipe(H, wall, cfg);
  CalibResult res;
  res.theta = theta0;
  OptState st;
  double initial = 0;

  for (int iter = 0; iter < max_iters; ++iter) {
    const auto batch = sample_batch(H.S, batch_fraction, seed, iter);
    const ForwardResult fwd = pipe.forward(res.theta);
    const LossBreakdown lb = loss(H, fwd.hR, fwd.ipf, res.theta.albedo,
                                  pipe.lambda1, pipe.lambda2, batch);
    CalibHistoryRow row;
    row.iter = iter;
    row.omega_pf = res.theta.pf.omega_pf;
    row.sigma_pf = res.theta.pf.sigma_pf;
    row.I_l = res.theta.ls.I_l;
    row.sigma_ls = res.theta.ls.sigma_ls;
    row.kappa_s = res.theta.ls.kappa_s;
    row.eta_s = res.theta.ls.eta_s;
    row.loss = lb;
    res.history.push_back(row);

    if (iter == 0) initial = lb.total;
    if (lb.total > 1e3 * initial)
      throw std::runtime_error("calibration diverged");
    if (res.history.size() >= 11) {
      double now = 0, prev = 0;
      const size_t nrows = res.history.size();
      for (size_t i = nrows - 10; i < nrows; ++i) now += res.history[i].loss.total;
      for (size_t i = nrows - 11; i < nrows - 1; ++i)
        prev += res.history[i].loss.total;
      now /= 10;
      prev /= 10;
      if (prev > 0 && std::abs(now - prev) / prev < 1e-4) {
        res.converged = true;
        break;
      }
    }
    if (iter + 1 == max_iters) break;
    const GradResult g = pipe.grad(res.theta, batch);
    step(st, res.theta, g);
  }
  return res;
}

}  // namespace nlos
