#include <fftw3.h>

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "doctest.h"
#include "nlos/rng.hpp"
#include "nlos/sensor.hpp"

using namespace nlos;

namespace {

// Independent dense discrete-convolution oracle for the EMG kernel: build the
// full fine-lattice convolution of the normalized oversampled factors and read
// off every 8th sample.
std::vector<double> dense_psi_oracle(const LaserSensorParams& p, double bw,
                                     int support_bins) {
  const int os = 8;
  const double delta = bw / os;
  // exponential factor truncated at the kernel support, unit discrete mass
  const int n_exp = os * support_bins + 1;
  std::vector<double> E(n_exp);
  double esum = 0;
  for (int i = 0; i < n_exp; ++i) {
    E[i] = std::exp(-p.kappa_s * i * delta);
    esum += E[i] * delta;
  }
  for (double& e : E) e /= esum;
  // Gaussian factor: mass I_l over the +-6 sigma lattice, evaluated wherever
  // the convolution needs it
  const int n_g = static_cast<int>(std::ceil(6.0 * p.sigma_ls / delta));
  double gsum = 0;
  for (int m = -n_g; m <= n_g; ++m)
    gsum += std::exp(-0.5 * (m * delta) * (m * delta) /
                     (p.sigma_ls * p.sigma_ls)) *
            delta;
  const double gscale = p.I_l / gsum;
  const int m_lo = -os * support_bins - (n_exp - 1);
  const int m_hi = os * support_bins;
  std::vector<double> G(m_hi - m_lo + 1);
  for (int m = m_lo; m <= m_hi; ++m)
    G[m - m_lo] = gscale * std::exp(-0.5 * (m * delta) * (m * delta) /
                                    (p.sigma_ls * p.sigma_ls));
  // full dense convolution on the fine lattice, offset so index 0 is fine
  // sample -support_bins*os
  const int lo = -support_bins * os;
  const int hi = support_bins * os;
  std::vector<double> conv(hi - lo + 1, 0.0);
  for (int i = 0; i < n_exp; ++i) {
    for (int m = m_lo; m <= m_hi; ++m) {
      const int t = i + m;  // fine index of this contribution
      if (t < lo || t > hi) continue;
      conv[t - lo] += E[i] * G[m - m_lo] * delta * delta;
    }
  }
  std::vector<double> out(2 * support_bins + 1);
  for (int j = -support_bins; j <= support_bins; ++j)
    out[j + support_bins] = conv[j * os - lo] / delta;
  return out;
}

TransientCube random_cube(int L, int S, int T, bool confocal, uint64_t seed) {
  TransientCube h = TransientCube::zeros(L, S, T, confocal, 16e-12);
  Rng rng = Rng::keyed(seed, 77);
  for (double& v : h.values) v = rng.next_double();
  return h;
}

}  // namespace

TEST_CASE("laser-sensor parameter validation") {
  LaserSensorParams p{1.0, 32e-12, 3e10, 0.0};
  CHECK_NOTHROW(p.validate());
  p.sigma_ls = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {0.0, 32e-12, 3e10, 0.0};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {1.0, 32e-12, 3e10, -0.1};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("psi kernel") {
  const double bw = 16e-12;

  SUBCASE("huge kappa collapses to the sampled Gaussian") {
    LaserSensorParams p{1.0, 2 * bw, 1e3 / bw, 0.0};
    const int n = default_support_bins(p, bw);
    const auto k = psi_kernel(p, bw, n);
    // reference: bin-lattice Gaussian normalized to area I_l
    std::vector<double> ref(k.size());
    double s = 0;
    for (int j = -n; j <= n; ++j) {
      ref[j + n] = std::exp(-0.5 * (j * bw) * (j * bw) / (p.sigma_ls * p.sigma_ls));
      s += ref[j + n] * bw;
    }
    double peak = 0;
    for (double& r : ref) {
      r /= s;
      peak = std::max(peak, r);
    }
    for (size_t i = 0; i < k.size(); ++i)
      CHECK(std::fabs(k[i] - ref[i]) < 1e-3 * peak);
  }

  SUBCASE("kernel mass times bin width equals I_l at default support") {
    const double kappas[] = {0.1 / bw, 0.5 / bw, 2.0 / bw};
    const double sigmas[] = {1.0 * bw, 2.5 * bw, 6.0 * bw};
    const double intens[] = {0.25, 1.0, 7.5};
    for (double kp : kappas)
      for (double sg : sigmas)
        for (double il : intens) {
          LaserSensorParams p{il, sg, kp, 0.0};
          const auto k = psi_kernel(p, bw, default_support_bins(p, bw));
          double sum = 0;
          for (double v : k) sum += v;
          CHECK(sum * bw == doctest::Approx(il).epsilon(1e-4));
        }
  }

  SUBCASE("matches the dense discrete-convolution oracle") {
    LaserSensorParams p{1.0, 2 * bw, 0.5 / bw, 0.0};
    const int n = default_support_bins(p, bw);
    const auto k = psi_kernel(p, bw, n);
    const auto ref = dense_psi_oracle(p, bw, n);
    REQUIRE(k.size() == ref.size());
    double peak = 0;
    for (double v : ref) peak = std::max(peak, v);
    for (size_t i = 0; i < k.size(); ++i) {
      if (ref[i] > 1e-9 * peak)
        CHECK(k[i] == doctest::Approx(ref[i]).epsilon(1e-6));
      else
        CHECK(std::fabs(k[i] - ref[i]) <= 1e-9 * peak);
    }
  }

  SUBCASE("entries nonnegative, unimodal after the mode") {
    LaserSensorParams p{2.0, 1.5 * bw, 0.8 / bw, 0.0};
    const auto k = psi_kernel(p, bw, default_support_bins(p, bw));
    size_t mode = 0;
    for (size_t i = 0; i < k.size(); ++i) {
      CHECK(k[i] >= 0.0);
      if (k[i] > k[mode]) mode = i;
    }
    for (size_t i = mode + 1; i < k.size(); ++i) CHECK(k[i] <= k[i - 1] + 1e-18);
  }

  SUBCASE("support below the 4 sigma + 6/kappa rule is rejected") {
    LaserSensorParams p{1.0, 2 * bw, 0.5 / bw, 0.0};
    const int min_n =
        static_cast<int>(std::ceil((4 * p.sigma_ls + 6 / p.kappa_s) / bw));
    CHECK_THROWS_AS(psi_kernel(p, bw, min_n - 1), std::invalid_argument);
    CHECK_NOTHROW(psi_kernel(p, bw, min_n));
  }

  SUBCASE("analytic derivatives match central differences") {
    const LaserSensorParams p{1.3, 2.2 * bw, 0.6 / bw, 0.0};
    const int n = default_support_bins(p, bw) + 40;  // shared fixed support
    const PsiKernelDerivs d = psi_kernel_derivs(p, bw, n);
    for (size_t i = 0; i < d.kernel.size(); ++i)
      CHECK(d.kernel[i] == psi_kernel(p, bw, n)[i]);
    const double h = 1e-6;
    LaserSensorParams pp = p, pm = p;
    pp.sigma_ls = p.sigma_ls * std::exp(h);
    pm.sigma_ls = p.sigma_ls * std::exp(-h);
    auto kp = psi_kernel(pp, bw, n);
    auto km = psi_kernel(pm, bw, n);
    double peak = 0;
    for (double v : d.kernel) peak = std::max(peak, v);
    for (size_t i = 0; i < kp.size(); ++i) {
      const double fd = (kp[i] - km[i]) / (2 * h);
      CHECK(std::fabs(d.d_log_sigma[i] - fd) < 1e-5 * peak);
    }
    pp = pm = p;
    pp.kappa_s = p.kappa_s * std::exp(h);
    pm.kappa_s = p.kappa_s * std::exp(-h);
    kp = psi_kernel(pp, bw, n);
    km = psi_kernel(pm, bw, n);
    for (size_t i = 0; i < kp.size(); ++i) {
      const double fd = (kp[i] - km[i]) / (2 * h);
      CHECK(std::fabs(d.d_log_kappa[i] - fd) < 1e-5 * peak);
    }
  }
}

TEST_CASE("apply_sensor") {
  const double bw = 16e-12;
  const LaserSensorParams p{1.0, 2 * bw, 0.5 / bw, 0.0};

  SUBCASE("all-zero input with offset 0.3 gives constant 0.3") {
    TransientCube h = TransientCube::zeros(1, 4, 64, true, bw);
    LaserSensorParams po = p;
    po.eta_s = 0.3;
    const TransientCube out = apply_sensor(h, po);
    for (double v : out.values) CHECK(v == 0.3);
  }

  SUBCASE("interior impulse copies the kernel") {
    TransientCube h = TransientCube::zeros(1, 1, 256, true, bw);
    const int b = 128;
    h.at(0, b) = 1.0;
    const int n = default_support_bins(p, bw);
    const auto k = psi_kernel(p, bw, n);
    const TransientCube out = apply_sensor(h, p, n);
    for (int t = 0; t < 256; ++t) {
      const int j = t - b;
      const double want = (j >= -n && j <= n) ? k[j + n] : 0.0;
      CHECK(out.at(0, t) == doctest::Approx(want).epsilon(1e-14));
    }
  }

  SUBCASE("matches an FFT convolution oracle") {
    const TransientCube h = random_cube(2, 3, 128, false, 42);
    LaserSensorParams pu = p;
    pu.I_l = bw;  // unit kernel mass keeps outputs O(1) for the abs tolerance
    const int n = default_support_bins(pu, bw);
    const auto k = psi_kernel(pu, bw, n);
    const TransientCube out = apply_sensor(h, pu, n);
    const int T = h.T;
    const int pad = T + 2 * n + 1;
    std::vector<std::complex<double>> fa(pad), fb(pad), scratch(pad);
    fftw_plan fwd = fftw_plan_dft_1d(
        pad, reinterpret_cast<fftw_complex*>(scratch.data()),
        reinterpret_cast<fftw_complex*>(scratch.data()), FFTW_FORWARD,
        FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_1d(
        pad, reinterpret_cast<fftw_complex*>(scratch.data()),
        reinterpret_cast<fftw_complex*>(scratch.data()), FFTW_BACKWARD,
        FFTW_ESTIMATE);
    std::fill(scratch.begin(), scratch.end(), 0.0);
    for (int j = 0; j < 2 * n + 1; ++j) scratch[j] = k[j];
    fftw_execute_dft(fwd, reinterpret_cast<fftw_complex*>(scratch.data()),
                     reinterpret_cast<fftw_complex*>(scratch.data()));
    fb = scratch;
    for (int l = 0; l < h.L; ++l) {
      for (int s = 0; s < h.S; ++s) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        for (int t = 0; t < T; ++t) scratch[t] = h.at(l, s, t);
        fftw_execute_dft(fwd, reinterpret_cast<fftw_complex*>(scratch.data()),
                         reinterpret_cast<fftw_complex*>(scratch.data()));
        for (int i = 0; i < pad; ++i) scratch[i] *= fb[i] / double(pad);
        fftw_execute_dft(bwd, reinterpret_cast<fftw_complex*>(scratch.data()),
                         reinterpret_cast<fftw_complex*>(scratch.data()));
        // linear-conv index of output bin t is t + n
        for (int t = 0; t < T; ++t)
          CHECK(std::fabs(out.at(l, s, t) - scratch[t + n].real()) < 1e-9);
      }
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }

  SUBCASE("linearity in the input") {
    const TransientCube h1 = random_cube(1, 4, 96, true, 1);
    const TransientCube h2 = random_cube(1, 4, 96, true, 2);
    LaserSensorParams po = p;
    po.eta_s = 0.2;
    TransientCube combo = h1;
    for (size_t i = 0; i < combo.values.size(); ++i)
      combo.values[i] = 2.0 * h1.values[i] + h2.values[i];
    const TransientCube a = apply_sensor(h1, po);
    const TransientCube b = apply_sensor(h2, po);
    const TransientCube c = apply_sensor(combo, po);
    for (size_t i = 0; i < c.values.size(); ++i) {
      const double want = 2.0 * (a.values[i] - po.eta_s) +
                          (b.values[i] - po.eta_s) + po.eta_s;
      CHECK(c.values[i] == doctest::Approx(want).epsilon(1e-12));
    }
  }

  SUBCASE("commutes with interior temporal shift") {
    TransientCube h = TransientCube::zeros(1, 1, 256, true, bw);
    h.at(0, 100) = 1.0;
    TransientCube hs = TransientCube::zeros(1, 1, 256, true, bw);
    hs.at(0, 105) = 1.0;
    const TransientCube a = apply_sensor(h, p);
    const TransientCube b = apply_sensor(hs, p);
    for (int t = 0; t < 251; ++t) CHECK(a.at(0, t + 100 - 100) == b.at(0, t + 5));
  }
}

TEST_CASE("poisson noise") {
  SUBCASE("huge photon scale reproduces the input") {
    TransientCube h = random_cube(1, 4, 64, true, 9);
    for (double& v : h.values) v += 1.0;  // bins >= 1
    const TransientCube out = add_poisson_noise(h, 1e9, 123);
    for (size_t i = 0; i < h.values.size(); ++i)
      CHECK(out.values[i] == doctest::Approx(h.values[i]).epsilon(1e-3));
  }
  SUBCASE("fixed seed is bit-identical") {
    const TransientCube h = random_cube(2, 3, 32, false, 10);
    const TransientCube a = add_poisson_noise(h, 50.0, 7);
    const TransientCube b = add_poisson_noise(h, 50.0, 7);
    for (size_t i = 0; i < a.values.size(); ++i)
      CHECK(a.values[i] == b.values[i]);
    const TransientCube c = add_poisson_noise(h, 50.0, 8);
    bool any_diff = false;
    for (size_t i = 0; i < a.values.size(); ++i)
      if (a.values[i] != c.values[i]) any_diff = true;
    CHECK(any_diff);
  }
  SUBCASE("empirical mean of Poisson(4) draws") {
    TransientCube h = TransientCube::zeros(1, 1, 10000, true, 16e-12);
    for (double& v : h.values) v = 4.0;
    const TransientCube out = add_poisson_noise(h, 1.0, 2024);
    double mean = 0;
    for (double v : out.values) mean += v;
    mean /= out.values.size();
    CHECK(std::fabs(mean - 4.0) < 0.07);
  }
  SUBCASE("negative input rejected") {
    TransientCube h = TransientCube::zeros(1, 1, 4, true, 16e-12);
    h.at(0, 0) = -1.0;
    CHECK_THROWS_AS(add_poisson_noise(h, 1.0, 0), std::invalid_argument);
  }
}

TEST_CASE("snr") {
  const TransientCube clean = random_cube(1, 4, 64, true, 21);
  SUBCASE("identical cubes give the +infinity sentinel") {
    CHECK(snr_db(clean, clean) == std::numeric_limits<double>::infinity());
  }
  SUBCASE("constant offset closed form") {
    TransientCube noisy = clean;
    const double c = 0.01;
    for (double& v : noisy.values) v += c;
    double num = 0;
    for (double v : clean.values) num += v * v;
    const double want = 10 * std::log10(num / (clean.values.size() * c * c));
    CHECK(snr_db(clean, noisy) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("random perturbation matches recomputation") {
    TransientCube noisy = clean;
    Rng rng = Rng::keyed(3, 3);
    for (double& v : noisy.values) v += 0.05 * rng.next_normal();
    double num = 0, den = 0;
    for (size_t i = 0; i < clean.values.size(); ++i) {
      num += clean.values[i] * clean.values[i];
      const double d = clean.values[i] - noisy.values[i];
      den += d * d;
    }
    CHECK(snr_db(clean, noisy) ==
          doctest::Approx(10 * std::log10(num / den)).epsilon(1e-12));
  }
}
