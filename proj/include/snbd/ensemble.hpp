#pragma once

// Monte Carlo ensemble over independent stochastic trajectories. The N-body
// density is estimated as the mean of tensor products of the 1-body densities;
// product observables use the per-trajectory factorization
// Tr{(A_1 x ... x A_N)(rho_1 x ... x rho_N)} = prod_k Tr{A_k rho_k}.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "snbd/operator_algebra.hpp"
#include "snbd/stochastic_propagator.hpp"
#include "snbd/system_model.hpp"

namespace snbd {

struct ObservableSpec {
  std::string name;
  std::vector<ComplexMatrix> factors;  // one Hermitian factor per particle

  friend bool operator==(const ObservableSpec&, const ObservableSpec&) = default;
};

enum class BlowupPolicy { abort, skip };

struct EnsembleOptions {
  std::size_t trajectories = 1;
  PropagationOptions propagation;
  std::uint64_t master_seed = 0;
  std::size_t workers = 1;
  bool full_density = false;
  // Non-empty enables vector mode: sum over trajectories of (x)_k rho_k |i_k>.
  std::vector<ComplexVector> reference_vectors;
  BlowupPolicy blowup = BlowupPolicy::abort;
  // Trajectories are grouped into this many contiguous blocks; blocks are the
  // unit of parallel work and the jackknife resampling groups.
  std::size_t jackknife_blocks = 64;
  std::size_t memory_limit_bytes = std::size_t{512} << 20;
  const std::atomic<bool>* cancel = nullptr;
};

struct EnsembleAccumulator {
  std::uint64_t fingerprint = 0;
  std::size_t count = 0;
  std::size_t skipped = 0;
  std::vector<double> times;
  std::vector<std::string> observable_names;
  std::vector<std::vector<cplx>> obs_sum;        // [observable][time]
  // Real parts shifted by the observable's t = 0 value, which every
  // trajectory shares; keeps the variance free of cancellation.
  std::vector<double> obs_shift;                 // [observable]
  std::vector<std::vector<double>> obs_sum_dev;  // [observable][time], sum (x - shift)
  std::vector<std::vector<double>> obs_sum_sq;   // [observable][time], sum (x - shift)^2
  std::vector<ComplexMatrix> rho_sum;            // [time], full-density mode
  std::vector<ComplexVector> vec_sum;            // [time], vector mode
  std::vector<ComplexVector> reference_vectors;  // as registered for vector mode

  // Invariant monitors over every accumulated trajectory and recorded time.
  double max_trace_error = 0.0;        // |Tr rho_k - 1|
  double max_hermiticity_error = 0.0;  // ||rho_k - rho_k^dag||_HS
  std::vector<std::vector<double>> min_eigenvalue;  // [time][particle]

  bool is_identity() const noexcept { return fingerprint == 0 && count == 0 && skipped == 0; }
  bool has_density() const noexcept { return !rho_sum.empty(); }
  bool has_vectors() const noexcept { return !vec_sum.empty(); }
};

struct EnsembleResult {
  std::vector<EnsembleAccumulator> blocks;  // ascending trajectory order
  EnsembleAccumulator total;
  bool cancelled = false;
};

EnsembleResult run_ensemble(const SystemSpec& spec, const std::vector<ObservableSpec>& observables,
                            const EnsembleOptions& options);

// Fieldwise sums, counts added. A default-constructed accumulator is the identity.
EnsembleAccumulator merge_accumulators(const EnsembleAccumulator& a, const EnsembleAccumulator& b);

// total minus one block (sums only); used for leave-one-block-out resampling.
EnsembleAccumulator leave_out(const EnsembleAccumulator& total, const EnsembleAccumulator& block);

std::vector<ComplexMatrix> estimate_density(const EnsembleAccumulator& acc);

struct ObservableEstimate {
  std::vector<double> mean;
  std::vector<double> std_error;
  std::vector<double> imag;  // imaginary residue of the mean
};

ObservableEstimate estimate_product_observable(const EnsembleAccumulator& acc,
                                               const std::string& name);

// Tr{(x)_k A_k * estimated rho^N(t)}; needs full-density mode.
std::vector<cplx> contract_density_observable(const EnsembleAccumulator& acc,
                                              const ObservableSpec& obs);

struct JackknifeEstimate {
  std::vector<double> value;
  std::vector<double> std_error;
};

// Delete-one-block jackknife of a per-time statistic of the estimated state.
JackknifeEstimate jackknife(
    const EnsembleResult& result,
    const std::function<std::vector<double>(const EnsembleAccumulator&)>& statistic);

ComplexMatrix observable_operator(const ObservableSpec& obs);

}  // namespace snbd
