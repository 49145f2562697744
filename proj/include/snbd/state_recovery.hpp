#pragma once

// Wavefunction recovery from the averaged action of the stochastic densities on
// a reference product vector, global-phase reconstruction, and eigenspectra
// from the Fourier transform of the autocorrelation function.
//
//   Phi~(t)  = M[rho_1|i_1> (x) ... (x) rho_N|i_N>],  Phi = Phi~ / |Phi~|
//   Theta(t) = int_0^t [<Psi0|H|Phi> - i d/dt' <Psi0|Phi>] / <Psi0|Phi> dt'
//   Psi(t)   = Phi(t) exp(-i Theta(t))
//   I(E)     = (1/pi) Re int_0^T <Psi0|Psi(t)> exp(iEt) dt

#include <span>
#include <vector>

#include "snbd/ensemble.hpp"
#include "snbd/operator_algebra.hpp"
#include "snbd/system_model.hpp"

namespace snbd {

enum class DerivativeMode { central, spectral };

struct RecoveryOptions {
  double eps_overlap = 1e-3;
  double eps_ref = 1e-8;
  DerivativeMode derivative = DerivativeMode::central;
};

struct RecoveryRecord {
  std::vector<double> t_grid;
  std::vector<ComplexVector> phi_tilde;
  std::vector<ComplexVector> phi;
  std::vector<double> theta;
  std::vector<double> theta_integrand_imag;  // should vanish up to noise
  std::vector<ComplexVector> psi;
  std::vector<cplx> autocorr;  // <Psi(0)|Psi(t)>
};

// Dominant eigenvector of each initial 1-body density.
std::vector<ComplexVector> default_reference_vectors(const SystemSpec& spec);

// Raw and normalized recovered vectors; throws MissingDataError when the
// accumulator was not run in vector mode with these references.
RecoveryRecord recover_raw_vector(const EnsembleAccumulator& acc,
                                  std::span<const ComplexVector> refs,
                                  const RecoveryOptions& options = {});

// Fills record.theta from the closed phase formula.
void compute_phase(RecoveryRecord& record, const SystemSpec& spec, std::span<const cplx> psi0,
                   const RecoveryOptions& options = {});

// psi(t) = phi(t) exp(-i Theta(t)), rotated so <psi0|psi(0)> is real positive,
// plus the autocorrelation series.
void recover_wavefunction(RecoveryRecord& record, std::span<const cplx> psi0);

// Convenience: all three stages in order.
RecoveryRecord recover(const EnsembleAccumulator& acc, std::span<const ComplexVector> refs,
                       const SystemSpec& spec, std::span<const cplx> psi0,
                       const RecoveryOptions& options = {});

// Derivative of a uniformly or non-uniformly sampled complex series.
std::vector<cplx> differentiate(std::span<const cplx> f, std::span<const double> t,
                                DerivativeMode mode);

struct SpectrumOptions {
  bool window = true;      // half-Hann taper exp-weighting the autocorrelation
  double oversample = 4.0;  // E-grid points per 2 pi / T
  double e_min = 0.0;
  double e_max = 0.0;  // e_min == e_max selects the Nyquist band of the time grid
};

struct Spectrum {
  std::vector<double> energies;
  std::vector<double> intensity;
  double resolution = 0.0;  // 2 pi / T
};

Spectrum autocorrelation_spectrum(std::span<const ComplexVector> psi_series,
                                  std::span<const double> t_grid, const SpectrumOptions& options = {});
Spectrum autocorrelation_spectrum(std::span<const cplx> autocorr, std::span<const double> t_grid,
                                  const SpectrumOptions& options = {});

struct Peak {
  double energy = 0.0;
  double intensity = 0.0;
};

// Local maxima above rel_threshold * max(I), refined by parabolic interpolation.
std::vector<Peak> find_peaks(const Spectrum& spectrum, double rel_threshold = 0.05);

}  // namespace snbd
