#pragma once

// Euler-Maruyama propagation of the N coupled stochastic 1-body densities.
//
// For particle k the Ito step is
//
//   d rho_k = -i [H_k + sum_s omega_s F_k^s O_k^s, rho_k] dt
//             + sum_s c_s (O_k^s - Obar_k^s) rho_k Z_k^s + h.c.
//
// with Obar_k^s = Tr{O_k^s rho_k}, F_k^s = sum_{l != k} Obar_l^s,
// c_s = principal sqrt(-i omega_s) and Z_k^s = sum_{l != k} dalpha_{k,l}^s.
// The increments satisfy dalpha_{l,k} = conj(dalpha_{k,l}) and
// E[conj(dalpha) dalpha'] = delta dt.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "snbd/counter_rng.hpp"
#include "snbd/operator_algebra.hpp"
#include "snbd/system_model.hpp"

namespace snbd {

// One draw of all p * N(N-1)/2 independent complex increments. Only k < l is
// stored; reading (s, l, k) with l > k yields the conjugate.
class NoiseIncrement {
 public:
  NoiseIncrement() = default;
  NoiseIncrement(std::size_t terms, std::size_t particles, double dt);

  std::size_t terms() const noexcept { return terms_; }
  std::size_t particles() const noexcept { return particles_; }
  std::size_t pairs() const noexcept { return particles_ * (particles_ - 1) / 2; }
  double dt() const noexcept { return dt_; }

  cplx operator()(std::size_t s, std::size_t k, std::size_t l) const;
  // Storage for k < l.
  cplx& stored(std::size_t s, std::size_t k, std::size_t l);
  std::span<const cplx> values() const noexcept { return values_; }

  std::size_t pair_index(std::size_t k, std::size_t l) const;

 private:
  std::size_t terms_ = 0;
  std::size_t particles_ = 0;
  double dt_ = 0.0;
  std::vector<cplx> values_;  // [s][pair]
};

// Draws each increment as (mu + i nu) sqrt(dt / 2), mu, nu ~ N(0, 1).
NoiseIncrement sample_increments(CounterRng& rng, std::size_t terms, std::size_t particles,
                                 double dt);
// Allocation-free variant used by the step loop.
void sample_increments_into(CounterRng& rng, NoiseIncrement& out);

struct TrajectoryState {
  double t = 0.0;
  std::vector<ComplexMatrix> rhos;
  CounterRng rng;
  std::uint64_t id = 0;
};

TrajectoryState initial_trajectory_state(const SystemSpec& spec, std::uint64_t master_seed,
                                         std::uint64_t trajectory_id);

struct StepCoefficients {
  std::vector<cplx> sqrt_factors;               // [s], principal sqrt(-i omega_s)
  std::vector<std::vector<double>> mean_fields;  // [s][k], Tr{O_k^s rho_k}
};

StepCoefficients step_coefficients(const SystemSpec& spec, std::span<const ComplexMatrix> rhos);

// Reusable propagator with preallocated workspace; one instance per worker.
class EulerMaruyamaStepper {
 public:
  explicit EulerMaruyamaStepper(const SystemSpec& spec);

  // Draws one shared increment from state.rng and advances every particle.
  void step(TrajectoryState& state, double dt);
  // Applies a given increment; exposed for tests that control the noise.
  void step_with(TrajectoryState& state, const NoiseIncrement& noise);

 private:
  const SystemSpec& spec_;
  std::vector<cplx> sqrt_factors_;
  std::vector<double> mean_fields_;  // [s * N + k]
  std::vector<double> mean_field_sums_;
  NoiseIncrement noise_;
  std::vector<ComplexMatrix> generator_;  // per particle
  std::vector<ComplexMatrix> next_;
};

// Functional form of one step; draws the increment from state.rng.
TrajectoryState em_step(const TrajectoryState& state, const SystemSpec& spec, double dt);

// Positivity diagnostics. Default tolerance: 100 * dt * max|omega_s|.
double positivity_tolerance(const SystemSpec& spec, double dt);

enum class PositivityPolicy { report, abort };

struct PropagationOptions {
  double t_final = 0.0;
  double dt = 0.0;
  std::size_t record_stride = 1;
  PositivityPolicy positivity = PositivityPolicy::report;
  double positivity_tol = -1.0;  // < 0 selects positivity_tolerance(spec, dt)
};

// Validated step/record counts for a time grid.
struct TimeGrid {
  std::size_t steps = 0;
  std::size_t stride = 1;
  double dt = 0.0;
  std::size_t records() const noexcept { return steps / stride + 1; }
  double time_of_record(std::size_t r) const { return static_cast<double>(r * stride) * dt; }
};
TimeGrid make_time_grid(double t_final, double dt, std::size_t record_stride);

// Visits the state at every recorded time (record index, state). Throws
// TrajectoryBlowupError on NaN/Inf and PositivityViolationError when the
// policy is abort.
void propagate_trajectory(const SystemSpec& spec, const PropagationOptions& options,
                          std::uint64_t master_seed, std::uint64_t trajectory_id,
                          const std::function<void(std::size_t, const TrajectoryState&)>& on_record);

std::vector<TrajectoryState> propagate_trajectory(const SystemSpec& spec,
                                                  const PropagationOptions& options,
                                                  std::uint64_t master_seed,
                                                  std::uint64_t trajectory_id = 0);

struct PositivityReport {
  std::vector<double> times;
  std::vector<std::vector<double>> min_eigenvalues;  // [snapshot][particle]
  double worst = 0.0;  // most negative eigenvalue seen (0 if none negative)
  double worst_time = 0.0;
  std::size_t worst_particle = 0;
};

PositivityReport positivity_report(std::span<const TrajectoryState> snapshots);

}  // namespace snbd
