#include "snbd/state_recovery.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "snbd/errors.hpp"

namespace snbd {

std::vector<ComplexVector> default_reference_vectors(const SystemSpec& spec) {
  std::vector<ComplexVector> refs;
  refs.reserve(spec.size());
  for (const auto& rho : spec.initial) {
    const auto eig = herm_eig(rho);
    refs.push_back(eig.column(eig.values.size() - 1));
  }
  return refs;
}

RecoveryRecord recover_raw_vector(const EnsembleAccumulator& acc,
                                  std::span<const ComplexVector> refs,
                                  const RecoveryOptions& options) {
  if (!acc.has_vectors())
    throw MissingDataError("run did not record reference-vector sums (recovery disabled)");
  if (!std::equal(refs.begin(), refs.end(), acc.reference_vectors.begin(),
                  acc.reference_vectors.end()))
    throw MissingDataError("reference vectors differ from the ones registered for the run");
  if (acc.count == 0) throw MissingDataError("no trajectories accumulated");

  RecoveryRecord rec;
  rec.t_grid = acc.times;
  const double inv = 1.0 / static_cast<double>(acc.count);
  for (std::size_t r = 0; r < acc.times.size(); ++r) {
    ComplexVector raw = acc.vec_sum[r];
    for (auto& z : raw) z *= inv;
    const double n = norm(raw);
    if (!(n >= options.eps_ref)) {
      std::ostringstream msg;
      msg << "reference vector nearly orthogonal to the state at t=" << acc.times[r]
          << " (|Phi~| = " << n << ")";
      throw DegenerateReferenceError(acc.times[r], msg.str());
    }
    ComplexVector unit = raw;
    for (auto& z : unit) z /= n;
    rec.phi_tilde.push_back(std::move(raw));
    rec.phi.push_back(std::move(unit));
  }
  return rec;
}

namespace {

double grid_step_if_uniform(std::span<const double> t) {
  if (t.size() < 2) return 0.0;
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw GridError("time grid must be strictly increasing");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * dt) return -1.0;
  return dt;
}

}  // namespace

std::vector<cplx> differentiate(std::span<const cplx> f, std::span<const double> t,
                                DerivativeMode mode) {
  const std::size_t n = f.size();
  if (t.size() != n) throw ShapeError("differentiate: series and grid differ in length");
  std::vector<cplx> d(n);
  if (n < 2) return d;
  if (mode == DerivativeMode::spectral) {
    const double dt = grid_step_if_uniform(t);
    if (dt <= 0.0) throw GridError("spectral derivative needs a uniform time grid");
    std::vector<cplx> coeff(n);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t k = 0; k < n; ++k) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += f[j] * std::polar(1.0, -two_pi * static_cast<double>((k * j) % n) / n);
      coeff[k] = acc;
    }
    for (std::size_t k = 0; k < n; ++k) {
      double freq = 0.0;
      if (2 * k < n) freq = static_cast<double>(k);
      else if (2 * k > n) freq = static_cast<double>(k) - static_cast<double>(n);
      coeff[k] *= cplx(0.0, two_pi * freq / (static_cast<double>(n) * dt));
    }
    for (std::size_t j = 0; j < n; ++j) {
      cplx acc = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        acc += coeff[k] * std::polar(1.0, two_pi * static_cast<double>((k * j) % n) / n);
      d[j] = acc / static_cast<double>(n);
    }
    return d;
  }

  if (n == 2) {
    d[0] = d[1] = (f[1] - f[0]) / (t[1] - t[0]);
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h1 = t[i] - t[i - 1], h2 = t[i + 1] - t[i];
    d[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] +
           h1 / (h2 * (h1 + h2)) * f[i + 1];
  }
  {
    const double h1 = t[1] - t[0], h2 = t[2] - t[1];
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] -
           h1 / (h2 * (h1 + h2)) * f[2];
  }
  {
    const double h1 = t[n - 2] - t[n - 3], h2 = t[n - 1] - t[n - 2];
    d[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2] +
               (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[n - 1];
  }
  return d;
}

void compute_phase(RecoveryRecord& record, const SystemSpec& spec, std::span<const cplx> psi0,
                   const RecoveryOptions& options) {
  const ComplexMatrix h = assemble_full_hamiltonian(spec);
  if (psi0.size() != h.dim()) throw ShapeError("compute_phase: initial state dimension mismatch");
  const ComplexVector h_psi0 = h * psi0;
  const std::size_t nt = record.phi.size();

  std::vector<cplx> overlap(nt), energy_overlap(nt);
  for (std::size_t r = 0; r < nt; ++r) {
    overlap[r] = inner(psi0, record.phi[r]);
    energy_overlap[r] = inner(h_psi0, record.phi[r]);
    if (!(std::abs(overlap[r]) >= options.eps_overlap)) {
      std::ostringstream msg;
      msg << "phase formula singular at t=" << record.t_grid[r] << ": |<Psi0|Phi>| = "
          << std::abs(overlap[r]) << " < " << options.eps_overlap;
      throw PhaseSingularityError(record.t_grid[r], msg.str());
    }
  }
  const auto d_overlap = differentiate(overlap, record.t_grid, options.derivative);

  record.theta.assign(nt, 0.0);
  record.theta_integrand_imag.assign(nt, 0.0);
  std::vector<double> integrand(nt);
  for (std::size_t r = 0; r < nt; ++r) {
    const cplx value = (energy_overlap[r] - cplx(0.0, 1.0) * d_overlap[r]) / overlap[r];
    integrand[r] = value.real();
    record.theta_integrand_imag[r] = value.imag();
  }
  for (std::size_t r = 1; r < nt; ++r)
    record.theta[r] = record.theta[r - 1] + 0.5 * (integrand[r] + integrand[r - 1]) *
                                                (record.t_grid[r] - record.t_grid[r - 1]);
}

void recover_wavefunction(RecoveryRecord& record, std::span<const cplx> psi0) {
  if (record.theta.size() != record.phi.size())
    throw MissingDataError("recover_wavefunction: phases have not been computed");
  const std::size_t nt = record.phi.size();
  record.psi.assign(nt, {});
  for (std::size_t r = 0; r < nt; ++r) {
    const cplx rot = std::polar(1.0, -record.theta[r]);
    ComplexVector v = record.phi[r];
    for (auto& z : v) z *= rot;
    record.psi[r] = std::move(v);
  }
  if (nt > 0) {
    const cplx c = inner(psi0, record.psi[0]);
    if (std::abs(c) > 0.0) {
      const cplx align = std::conj(c) / std::abs(c);
      for (auto& v : record.psi)
        for (auto& z : v) z *= align;
    }
  }
  record.autocorr.clear();
  for (const auto& v : record.psi) record.autocorr.push_back(inner(psi0, v));
}

RecoveryRecord recover(const EnsembleAccumulator& acc, std::span<const ComplexVector> refs,
                       const SystemSpec& spec, std::span<const cplx> psi0,
                       const RecoveryOptions& options) {
  RecoveryRecord rec = recover_raw_vector(acc, refs, options);
  compute_phase(rec, spec, psi0, options);
  recover_wavefunction(rec, psi0);
  return rec;
}

Spectrum autocorrelation_spectrum(std::span<const ComplexVector> psi_series,
                                  std::span<const double> t_grid, const SpectrumOptions& options) {
  if (psi_series.empty()) throw ShapeError("autocorrelation_spectrum: empty series");
  std::vector<cplx> autocorr;
  autocorr.reserve(psi_series.size());
  for (const auto& v : psi_series) autocorr.push_back(inner(psi_series.front(), v));
  return autocorrelation_spectrum(autocorr, t_grid, options);
}

Spectrum autocorrelation_spectrum(std::span<const cplx> autocorr, std::span<const double> t_grid,
                                  const SpectrumOptions& options) {
  const std::size_t nt = autocorr.size();
  if (t_grid.size() != nt) throw ShapeError("autocorrelation_spectrum: grid length mismatch");
  if (nt < 2) throw GridError("autocorrelation_spectrum: need at least two samples");
  const double dt = grid_step_if_uniform(t_grid);
  if (dt <= 0.0) throw GridError("autocorrelation_spectrum: time grid is not uniform");
  if (!(options.oversample >= 1.0)) throw GridError("autocorrelation_spectrum: oversample must be >= 1");
  const double span_t = t_grid.back() - t_grid.front();

  Spectrum out;
  out.resolution = 2.0 * std::numbers::pi / span_t;
  const double de = out.resolution / options.oversample;
  double lo = options.e_min, hi = options.e_max;
  if (lo == hi) {
    hi = std::numbers::pi / dt;
    lo = -hi;
  }
  if (!(hi > lo)) throw GridError("autocorrelation_spectrum: empty energy window");

  std::vector<cplx> weighted(nt);
  for (std::size_t n = 0; n < nt; ++n) {
    const double tau = t_grid[n] - t_grid.front();
    double w = (n == 0 || n + 1 == nt) ? 0.5 * dt : dt;
    if (options.window) w *= 0.5 * (1.0 + std::cos(std::numbers::pi * tau / span_t));
    weighted[n] = w * autocorr[n];
  }
  const auto ne = static_cast<std::size_t>(std::floor((hi - lo) / de)) + 1;
  out.energies.reserve(ne);
  out.intensity.reserve(ne);
  for (std::size_t i = 0; i < ne; ++i) {
    const double e = lo + static_cast<double>(i) * de;
    cplx acc = 0.0;
    for (std::size_t n = 0; n < nt; ++n)
      acc += weighted[n] * std::polar(1.0, e * (t_grid[n] - t_grid.front()));
    out.energies.push_back(e);
    out.intensity.push_back(acc.real() / std::numbers::pi);
  }
  return out;
}

std::vector<Peak> find_peaks(const Spectrum& spectrum, double rel_threshold) {
  const auto& y = spectrum.intensity;
  std::vector<Peak> peaks;
  if (y.size() < 3) return peaks;
  const double top = *std::max_element(y.begin(), y.end());
  if (!(top > 0.0)) return peaks;
  const double de = spectrum.energies[1] - spectrum.energies[0];
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    if (!(y[i] > y[i - 1] && y[i] >= y[i + 1]) || y[i] < rel_threshold * top) continue;
    const double curvature = y[i - 1] - 2.0 * y[i] + y[i + 1];
    double shift = 0.0;
    if (curvature < 0.0) shift = 0.5 * (y[i - 1] - y[i + 1]) / curvature;
    peaks.push_back({spectrum.energies[i] + shift * de, y[i]});
  }
  return peaks;
}

}  // namespace snbd
