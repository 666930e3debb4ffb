#pragma once

#include <array>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/phasor.hpp"
#include "nlos/sensor.hpp"
#include "nlos/surface.hpp"
#include "nlos/transient_cube.hpp"
#include "nlos/volume.hpp"

namespace nlos {

// Everything the optimizer touches: phasor kernel, laser-sensor model and
// the per-voxel albedo. Positive scalars are optimized in log space.
struct ParamSet {
  PhasorKernelParams pf;
  LaserSensorParams ls;
  AlbedoGrid albedo;
};

struct LossBreakdown {
  double e_h = 0, e_ipf = 0, e_rho = 0, total = 0;
  double lambda1 = 1e2, lambda2 = 5e-3;
};

// Gradient in optimization coordinates: log for the five positive scalars,
// direct for eta_s, per-voxel for the albedo.
struct GradResult {
  double d_log_omega = 0, d_log_sigma_pf = 0;
  double d_log_I = 0, d_log_sigma_ls = 0, d_log_kappa = 0, d_eta = 0;
  std::vector<double> d_albedo;
};

// Frozen discrete branches (frequency band, psi support, hit/miss mask) so a
// finite-difference probe evaluates the same smooth function the analytic
// gradient differentiates.
struct Freeze {
  int k0 = 0, K = 0;
  int support_bins = 0;
  HitMask hits;
};

struct ForwardResult {
  VolumeGrid ipf;      // normalized reconstruction
  ImplicitSurface G;
  TransientCube hr;    // rendered transients, pre sensor model
  TransientCube hR;    // after Psi convolution and offset
  double raw_max = 0;  // normalization constant of ipf
  int k0 = 0, K = 0;   // retained frequency band
};

// E_H over the batch sensors plus the full-grid regularizers.
LossBreakdown loss(const TransientCube& H, const TransientCube& H_R,
                   const VolumeGrid& ipf, const AlbedoGrid& rho, double lambda1,
                   double lambda2, const std::vector<int>& batch_sensors);

// The measurement cube with its precomputed one-sided spectrum and the lazy
// per-frequency-bin cache of RSD-propagated fields. The cached fields do not
// depend on theta, so one Pipeline serves a whole calibration run.
class Pipeline {
 public:
  Pipeline(const TransientCube& H, const WallGrid& wall, const SceneConfig& cfg);

  ForwardResult forward(const ParamSet& theta, const Freeze* fz = nullptr) const;
  Freeze make_freeze(const ParamSet& theta) const;
  GradResult grad(const ParamSet& theta, const std::vector<int>& batch_sensors,
                  const Freeze* fz = nullptr) const;
  LossBreakdown loss_at(const ParamSet& theta, const std::vector<int>& batch_sensors,
                        const Freeze* fz = nullptr) const;

  const TransientCube& data() const { return H_; }
  const WallGrid& wall() const { return wall_; }
  const SceneConfig& config() const { return cfg_; }

  double lambda1 = 1e2, lambda2 = 5e-3;

 private:
  struct Band {
    int k0, K;
    std::vector<std::complex<double>> pk;            // kernel spectrum on band
  };
  Band band_of(const PhasorKernelParams& p, const Freeze* fz) const;
  const std::vector<std::complex<double>>& field_for_bin(int k) const;
  std::vector<std::complex<double>> complex_field(const Band& b) const;

  TransientCube H_;
  WallGrid wall_;
  SceneConfig cfg_;
  int khalf_ = 0;
  std::vector<std::complex<double>> spectrum_;  // (l, s, k) over [0, T/2]
  mutable std::map<int, std::vector<std::complex<double>>> cache_;
  mutable std::mutex cache_mutex_;
};

// Convenience wrappers over a one-shot Pipeline.
ForwardResult forward(const TransientCube& H, const ParamSet& theta,
                      const WallGrid& wall, const SceneConfig& cfg);
GradResult grad(const TransientCube& H, const ParamSet& theta, const WallGrid& wall,
                const SceneConfig& cfg, const std::vector<int>& batch_sensors);

// Adam-style moments per scalar coordinate and per albedo voxel.
struct OptState {
  int iteration = 0;
  double lr_scalar = 1e-2, lr_albedo = 1e-2;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::array<double, 6> m{}, v{};
  std::vector<double> m_a, v_a;
};

void step(OptState& state, ParamSet& theta, const GradResult& g);

struct CalibHistoryRow {
  int iter = 0;
  double omega_pf = 0, sigma_pf = 0, I_l = 0, sigma_ls = 0, kappa_s = 0, eta_s = 0;
  LossBreakdown loss;
};

struct CalibResult {
  ParamSet theta;
  std::vector<CalibHistoryRow> history;
  bool converged = false;
};

// Gradient descent on loss(forward(theta)) with seeded batches of sensor
// points per iteration. Convergence: relative change of the 10-iteration
// moving average of total loss below 1e-4. Throws on divergence (total loss
// beyond 1e3 x initial).
CalibResult calibrate(const TransientCube& H, const ParamSet& theta0,
                      const WallGrid& wall, const SceneConfig& cfg, int max_iters,
                      double batch_fraction, uint64_t seed);

// Seeded without-replacement sensor batch for iteration iter.
std::vector<int> sample_batch(int num_sensors, double fraction, uint64_t seed,
                              int iter);

// theta0 defaults for a wall: Omega_pf at the wall-sampling Nyquist
// wavelength (2x sample pitch), sigma_pf two cycles, sigma_ls two bins,
// kappa_s one per two bins, albedo 0.5.
ParamSet default_params(const WallGrid& wall, const SceneConfig& cfg);

}  // namespace nlos
