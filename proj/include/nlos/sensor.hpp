#pragma once

#include <vector>

#include "nlos/transient_cube.hpp"

namespace nlos {

// Joint laser-sensor correlation model: Gaussian of width sigma_ls (the
// merged laser pulse and sensor jitter) convolved with the exponential sensor
// decay kappa_s, scaled by the laser intensity I_l, plus the intensity offset
// eta_s. The jitter offset mu_s is fixed at zero and not a parameter.
struct LaserSensorParams {
  double I_l = 1.0;       // laser intensity, linear units, > 0
  double sigma_ls = 0;    // seconds, > 0
  double kappa_s = 0;     // 1/seconds, > 0
  double eta_s = 0;       // intensity offset, >= 0

  void validate() const;
};

// Smallest support honoring the 4*sigma + 6/kappa rule.
int default_support_bins(const LaserSensorParams& p, double bin_width);

// Discrete samples of the exponentially modified Gaussian Psi on the bin
// lattice, index range [-support_bins, +support_bins]; the convolution
// integral is evaluated by midpoint quadrature at 8x oversampling, so
// sum(kernel) * bin_width approaches I_l as the support grows.
std::vector<double> psi_kernel(const LaserSensorParams& p, double bin_width,
                               int support_bins);

// Kernel plus its exact derivatives in the optimization coordinates
// (log I_l, log sigma_ls, log kappa_s), obtained by differentiating the same
// quadrature analytically.
struct PsiKernelDerivs {
  std::vector<double> kernel;
  std::vector<double> d_log_sigma;
  std::vector<double> d_log_kappa;
  // d/d log I_l equals the kernel itself (Psi is linear in I_l).
};
PsiKernelDerivs psi_kernel_derivs(const LaserSensorParams& p, double bin_width,
                                  int support_bins);

// H_R = Psi * H_r + eta_s: per-(l,s) zero-padded temporal convolution with
// the discrete kernel, then the offset added to every bin. A support of 0
// selects default_support_bins.
TransientCube apply_sensor(const TransientCube& h, const LaserSensorParams& p,
                           int support_bins = 0);

// Replaces each bin v by Poisson(v * photon_scale) / photon_scale using a
// counter-based generator keyed by (seed, l, s, t).
TransientCube add_poisson_noise(const TransientCube& h, double photon_scale,
                                uint64_t seed);

// 10 log10(sum clean^2 / sum (clean - noisy)^2); +infinity for identical cubes.
double snr_db(const TransientCube& clean, const TransientCube& noisy);

}  // namespace nlos
