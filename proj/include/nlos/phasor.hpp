#pragma once

#include <complex>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/transient_cube.hpp"
#include "nlos/volume.hpp"

namespace nlos {

// Virtual illumination: a central frequency under a zero-mean (in record
// coordinates) Gaussian envelope.
struct PhasorKernelParams {
  double omega_pf = 0;  // rad/s, > 0
  double sigma_pf = 0;  // seconds, > 0

  void validate() const;
};

// Frequency-domain wall data over a retained contiguous DFT-bin band
// [k0, k0 + K) of the one-sided spectrum of a T-bin record.
struct SpectralCube {
  int L = 0, S = 0;
  int k0 = 0, K = 0;
  int T = 0;               // temporal record length the band refers to
  double bin_width = 0;
  bool confocal = false;
  std::vector<std::complex<double>> values;  // (l, s, k) row-major

  std::complex<double>& at(int l, int s, int k) {
    return values[(static_cast<size_t>(l) * S + s) * K + k];
  }
  const std::complex<double>& at(int l, int s, int k) const {
    return values[(static_cast<size_t>(l) * S + s) * K + k];
  }
  // Angular frequency of retained bin k (k in [0, K)).
  double omega(int k) const;
};

// Samples of e^{i Omega t} e^{-t^2/(2 sigma^2)} at the given bin-center
// times, re-centered on the record midpoint.
std::vector<std::complex<double>> phasor_kernel(const PhasorKernelParams& p,
                                                const std::vector<double>& t_grid);

std::vector<double> bin_centers(int num_bins, double bin_width, double t0 = 0);

// Cancels the record-midpoint centering delay of a kernel DFT: multiplies
// bin k by e^{+2 pi i k (N-1)/2 / N}, so the kernel spectrum carries zero
// group delay and backprojection at virtual time 0 focuses at the source.
void derotate_spectrum(std::vector<std::complex<double>>& spec);

// Per-(l,s) DFT of h multiplied by the kernel spectrum; keeps the contiguous
// one-sided band where the kernel magnitude is >= 1e-3 of its spectral peak.
SpectralCube filter_H(const TransientCube& h, const PhasorKernelParams& p);

// Complex RSD field of a single retained frequency bin k, accumulated over
// the wall onto the voxel lattice. _direct is the summation oracle, _fft the
// zero-padded plane-convolution path; both return (W*H*D) in VolumeGrid
// index order.
std::vector<std::complex<double>> rsd_propagate_direct(const SpectralCube& hpf,
                                                       int k, const WallGrid& wall,
                                                       const SceneConfig& cfg);
std::vector<std::complex<double>> rsd_propagate_fft(const SpectralCube& hpf,
                                                    int k, const WallGrid& wall,
                                                    const SceneConfig& cfg);

// I_pf(x_v) = |sum_w sum_s sum_l e^{-i(w/c)(d_lv+d_vs)}/(d_lv d_vs) H_pf|^2.
// Oracle path, guarded to <= 16x16 wall grids and <= 32^3 volumes.
VolumeGrid rsd_direct(const SpectralCube& hpf, const WallGrid& wall,
                      const SceneConfig& cfg);

// Fast path; numerically equivalent to rsd_direct on planar, lattice-aligned
// configurations (wall pitch equal to the lateral voxel pitch and the two
// lattices offset by whole cells).
VolumeGrid rsd_fft(const SpectralCube& hpf, const WallGrid& wall,
                   const SceneConfig& cfg);

struct Image2D {
  int width = 0, height = 0;
  std::vector<double> pixels;  // row-major, pixels[row * width + col]

  double& at(int col, int row) { return pixels[static_cast<size_t>(row) * width + col]; }
  double at(int col, int row) const { return pixels[static_cast<size_t>(row) * width + col]; }
};

// out(x, z) = max over y of v(x, y, z); width = W (x), height = D (z).
Image2D max_project_xz(const VolumeGrid& v);

// v / max(v); throws "empty reconstruction" on an all-zero volume.
VolumeGrid normalize_volume(const VolumeGrid& v);

}  // namespace nlos
