#include "snbd/stochastic_propagator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "snbd/errors.hpp"

namespace snbd {

NoiseIncrement::NoiseIncrement(std::size_t terms, std::size_t particles, double dt)
    : terms_(terms), particles_(particles), dt_(dt) {
  values_.assign(terms * pairs(), cplx(0.0));
}

std::size_t NoiseIncrement::pair_index(std::size_t k, std::size_t l) const {
  // Row-major enumeration of the strict upper triangle.
  return k * particles_ - k * (k + 1) / 2 + (l - k - 1);
}

cplx NoiseIncrement::operator()(std::size_t s, std::size_t k, std::size_t l) const {
  if (k == l || k >= particles_ || l >= particles_ || s >= terms_)
    throw ContractError("NoiseIncrement: invalid index");
  if (k < l) return values_[s * pairs() + pair_index(k, l)];
  return std::conj(values_[s * pairs() + pair_index(l, k)]);
}

cplx& NoiseIncrement::stored(std::size_t s, std::size_t k, std::size_t l) {
  if (!(k < l) || l >= particles_ || s >= terms_)
    throw ContractError("NoiseIncrement: stored entries require k < l");
  return values_[s * pairs() + pair_index(k, l)];
}

void sample_increments_into(CounterRng& rng, NoiseIncrement& out) {
  const double scale = std::sqrt(0.5 * out.dt());
  for (std::size_t s = 0; s < out.terms(); ++s)
    for (std::size_t k = 0; k < out.particles(); ++k)
      for (std::size_t l = k + 1; l < out.particles(); ++l) {
        const auto [mu, nu] = rng.normal_pair();
        out.stored(s, k, l) = cplx(mu * scale, nu * scale);
      }
}

NoiseIncrement sample_increments(CounterRng& rng, std::size_t terms, std::size_t particles,
                                 double dt) {
  if (!(dt > 0.0)) throw ContractError("sample_increments: dt must be positive");
  NoiseIncrement inc(terms, particles, dt);
  sample_increments_into(rng, inc);
  return inc;
}

TrajectoryState initial_trajectory_state(const SystemSpec& spec, std::uint64_t master_seed,
                                         std::uint64_t trajectory_id) {
  TrajectoryState state;
  state.t = 0.0;
  state.rhos = spec.initial;
  state.rng = CounterRng(master_seed, trajectory_id);
  state.id = trajectory_id;
  return state;
}

StepCoefficients step_coefficients(const SystemSpec& spec, std::span<const ComplexMatrix> rhos) {
  StepCoefficients c;
  c.sqrt_factors.reserve(spec.terms.size());
  c.mean_fields.assign(spec.terms.size(), std::vector<double>(spec.size()));
  for (std::size_t s = 0; s < spec.terms.size(); ++s) {
    c.sqrt_factors.push_back(std::sqrt(cplx(0.0, -spec.terms[s].omega)));
    for (std::size_t k = 0; k < spec.size(); ++k)
      c.mean_fields[s][k] = (spec.terms[s].ops[k] * rhos[k]).trace().real();
  }
  return c;
}

EulerMaruyamaStepper::EulerMaruyamaStepper(const SystemSpec& spec)
    : spec_(spec),
      mean_fields_(spec.terms.size() * spec.size()),
      mean_field_sums_(spec.terms.size()),
      noise_(spec.terms.size(), spec.size(), 0.0) {
  for (const auto& term : spec.terms) sqrt_factors_.push_back(std::sqrt(cplx(0.0, -term.omega)));
  for (const auto& p : spec.particles) {
    generator_.emplace_back(p.dim);
    next_.emplace_back(p.dim);
  }
}

void EulerMaruyamaStepper::step(TrajectoryState& state, double dt) {
  if (noise_.dt() != dt) noise_ = NoiseIncrement(spec_.terms.size(), spec_.size(), dt);
  sample_increments_into(state.rng, noise_);
  step_with(state, noise_);
}

void EulerMaruyamaStepper::step_with(TrajectoryState& state, const NoiseIncrement& noise) {
  const std::size_t n = spec_.size();
  const std::size_t p = spec_.terms.size();
  const double dt = noise.dt();
  const cplx minus_i_dt(0.0, -dt);

  // Mean fields at the start of the step (Ito evaluation point).
  for (std::size_t s = 0; s < p; ++s) {
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const ComplexMatrix& op = spec_.terms[s].ops[k];
      const ComplexMatrix& rho = state.rhos[k];
      const std::size_t d = rho.dim();
      cplx tr = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) tr += op(i, j) * rho(j, i);
      mean_fields_[s * n + k] = tr.real();
      total += tr.real();
    }
    mean_field_sums_[s] = total;
  }

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t d = spec_.particles[k].dim;
    ComplexMatrix& gen = generator_[k];
    const ComplexMatrix& h = spec_.particles[k].h;
    // gen = -i dt H_eff + sum_s c_s Z_k^s (O_k^s - Obar_k^s)
    for (std::size_t i = 0; i < d * d; ++i) gen.data()[i] = minus_i_dt * h.data()[i];
    for (std::size_t s = 0; s < p; ++s) {
      const double obar = mean_fields_[s * n + k];
      const double field = mean_field_sums_[s] - obar;
      cplx z = 0.0;
      for (std::size_t l = 0; l < n; ++l)
        if (l != k) z += noise(s, k, l);
      const cplx noise_coeff = sqrt_factors_[s] * z;
      const cplx drift_coeff = minus_i_dt * (spec_.terms[s].omega * field);
      const ComplexMatrix& op = spec_.terms[s].ops[k];
      for (std::size_t i = 0; i < d * d; ++i) gen.data()[i] += (drift_coeff + noise_coeff) * op.data()[i];
      for (std::size_t i = 0; i < d; ++i) gen(i, i) -= noise_coeff * obar;
    }

    // rho' = rho + Y + Y^dag with Y = gen * rho, then symmetrized.
    const ComplexMatrix& rho = state.rhos[k];
    ComplexMatrix& out = next_[k];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        cplx y_ij = 0.0, y_ji = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
          y_ij += gen(i, q) * rho(q, j);
          y_ji += gen(j, q) * rho(q, i);
        }
        out(i, j) = rho(i, j) + y_ij + std::conj(y_ji);
      }
    for (std::size_t i = 0; i < d; ++i) {
      out(i, i) = cplx(out(i, i).real(), 0.0);
      for (std::size_t j = i + 1; j < d; ++j) {
        const cplx avg = 0.5 * (out(i, j) + std::conj(out(j, i)));
        out(i, j) = avg;
        out(j, i) = std::conj(avg);
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) std::swap(state.rhos[k], next_[k]);
  state.t += dt;
}

TrajectoryState em_step(const TrajectoryState& state, const SystemSpec& spec, double dt) {
  if (!(dt > 0.0)) throw ContractError("em_step: dt must be positive");
  TrajectoryState next = state;
  EulerMaruyamaStepper stepper(spec);
  stepper.step(next, dt);
  for (const auto& rho : next.rhos) {
    if (!rho.all_finite()) {
      std::ostringstream msg;
      msg << "trajectory " << next.id << " diverged at t=" << next.t;
      throw TrajectoryBlowupError(next.t, next.id, msg.str());
    }
  }
  return next;
}

double positivity_tolerance(const SystemSpec& spec, double dt) {
  return 100.0 * dt * spec.max_abs_omega();
}

TimeGrid make_time_grid(double t_final, double dt, std::size_t record_stride) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time.dt", "must be positive and finite");
  if (!(t_final >= dt) || !std::isfinite(t_final))
    throw ConfigError("time.t_final", "must be finite and at least dt");
  if (record_stride == 0) throw ConfigError("time.record_stride", "must be at least 1");
  const double ratio = t_final / dt;
  if (ratio > 1e12) throw ConfigError("time", "step count overflow (t_final / dt > 1e12)");
  const auto steps = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(static_cast<double>(steps) * dt - t_final) > 1e-9 * t_final)
    throw ConfigError("time.t_final", "must be an integer multiple of dt");
  if (steps % record_stride != 0)
    throw ConfigError("time.record_stride", "must divide the number of steps (" +
                                                std::to_string(steps) + ")");
  return {steps, record_stride, dt};
}

namespace {

void check_positivity(const TrajectoryState& state, double tol) {
  for (std::size_t k = 0; k < state.rhos.size(); ++k) {
    const double lowest = herm_eigvals(state.rhos[k]).front();
    if (lowest < -tol) {
      std::ostringstream msg;
      msg << "trajectory " << state.id << ", particle " << k << ": eigenvalue " << lowest
          << " below -" << tol << " at t=" << state.t;
      throw PositivityViolationError(state.t, state.id, msg.str());
    }
  }
}

}  // namespace

void propagate_trajectory(const SystemSpec& spec, const PropagationOptions& options,
                          std::uint64_t master_seed, std::uint64_t trajectory_id,
                          const std::function<void(std::size_t, const TrajectoryState&)>& on_record) {
  const TimeGrid grid = make_time_grid(options.t_final, options.dt, options.record_stride);
  const double tol =
      options.positivity_tol >= 0.0 ? options.positivity_tol : positivity_tolerance(spec, grid.dt);
  const bool enforce = options.positivity == PositivityPolicy::abort;

  TrajectoryState state = initial_trajectory_state(spec, master_seed, trajectory_id);
  EulerMaruyamaStepper stepper(spec);
  if (enforce) check_positivity(state, tol);
  on_record(0, state);
  for (std::size_t step = 1; step <= grid.steps; ++step) {
    stepper.step(state, grid.dt);
    state.t = static_cast<double>(step) * grid.dt;
    for (const auto& rho : state.rhos) {
      if (!rho.all_finite()) {
        std::ostringstream msg;
        msg << "trajectory " << trajectory_id << " diverged (non-finite density) at t=" << state.t;
        throw TrajectoryBlowupError(state.t, trajectory_id, msg.str());
      }
    }
    if (step % grid.stride == 0) {
      if (enforce) check_positivity(state, tol);
      on_record(step / grid.stride, state);
    }
  }
}

std::vector<TrajectoryState> propagate_trajectory(const SystemSpec& spec,
                                                  const PropagationOptions& options,
                                                  std::uint64_t master_seed,
                                                  std::uint64_t trajectory_id) {
  std::vector<TrajectoryState> snapshots;
  propagate_trajectory(spec, options, master_seed, trajectory_id,
                       [&](std::size_t, const TrajectoryState& s) { snapshots.push_back(s); });
  return snapshots;
}

PositivityReport positivity_report(std::span<const TrajectoryState> snapshots) {
  PositivityReport report;
  for (const auto& snap : snapshots) {
    report.times.push_back(snap.t);
    std::vector<double> mins;
    for (std::size_t k = 0; k < snap.rhos.size(); ++k) {
      const double lowest = herm_eigvals(snap.rhos[k]).front();
      mins.push_back(lowest);
      if (lowest < report.worst) {
        report.worst = lowest;
        report.worst_time = snap.t;
        report.worst_particle = k;
      }
    }
    report.min_eigenvalues.push_back(std::move(mins));
  }
  return report;
}

}  // namespace snbd
