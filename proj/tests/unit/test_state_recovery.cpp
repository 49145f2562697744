#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "snbd/ensemble.hpp"
#include "snbd/errors.hpp"
#include "snbd/exact_oracle.hpp"
#include "snbd/state_recovery.hpp"

using namespace snbd;

namespace {

const double kR = 1.0 / std::sqrt(2.0);

std::vector<ComplexVector> plus_refs() { return {{kR, kR}, {kR, kR}}; }

EnsembleResult vector_run(const SystemSpec& spec, const std::vector<ComplexVector>& refs, std::size_t m,
                          double t_final, double dt, std::size_t stride) {
  EnsembleOptions o;
  o.trajectories = m;
  o.propagation = {t_final, dt, stride};
  o.master_seed = 777;
  o.reference_vectors = refs;
  return run_ensemble(spec, {}, o);
}

std::vector<double> uniform(double t_final, std::size_t n) {
  std::vector<double> t;
  for (std::size_t i = 0; i <= n; ++i) t.push_back(t_final * static_cast<double>(i) / static_cast<double>(n));
  return t;
}

}  // namespace

TEST_CASE("default reference vectors are the dominant eigenvectors") {
  const auto spec = testutil::benchmark();
  const auto refs = default_reference_vectors(spec);
  CHECK(std::abs(refs[0][0]) == doctest::Approx(1.0));
  CHECK(std::abs(refs[1][1]) == doctest::Approx(1.0));
}

TEST_CASE("t = 0 recovery is the projector acting on the reference") {
  const auto spec = testutil::benchmark();
  const auto refs = plus_refs();
  const auto res = vector_run(spec, refs, 16, 0.1, 1e-3, 10);
  const auto rec = recover_raw_vector(res.total, refs);
  const auto psi0 = initial_product_vector(spec);
  const auto ref = kron(refs[0], refs[1]);
  const cplx c = inner(psi0, ref);
  for (std::size_t i = 0; i < psi0.size(); ++i) CHECK(std::abs(rec.phi_tilde[0][i] - psi0[i] * c) <= 1e-12);
  CHECK(std::abs(std::abs(inner(psi0, rec.phi[0])) - 1.0) <= 1e-12);
}

TEST_CASE("frozen dynamics: constant raw vector, zero phase") {
  ParticleSpec zero{2, ComplexMatrix(2), Statistics::distinguishable, ""};
  const SystemSpec spec = make_system({zero, zero}, {},
                                      {ComplexMatrix::projector(testutil::up()), ComplexMatrix::projector(testutil::down())});
  const auto refs = plus_refs();
  const auto res = vector_run(spec, refs, 4, 1.0, 1e-2, 10);
  const auto psi0 = initial_product_vector(spec);
  const auto rec = recover(res.total, refs, spec, psi0);
  for (std::size_t r = 0; r < rec.t_grid.size(); ++r) {
    CHECK(rec.phi_tilde[r] == rec.phi_tilde[0]);
    CHECK(std::abs(rec.theta[r]) <= 1e-15);
  }
}

TEST_CASE("eigenstate: phase grows linearly with the energy") {
  // |uu> is an eigenvector of the benchmark Hamiltonian with E = omega0 + J.
  auto spec = testutil::benchmark(1.0, 0.2);
  spec.initial[1] = ComplexMatrix::projector(testutil::up());
  const auto psi0 = initial_product_vector(spec);
  const double e = 1.2;
  RecoveryRecord rec;
  rec.t_grid = uniform(5.0, 500);
  for (double t : rec.t_grid) {
    (void)t;
    rec.phi.push_back(psi0);  // exact Phi is time independent for an eigenstate
  }
  compute_phase(rec, spec, psi0);
  for (std::size_t r = 0; r < rec.t_grid.size(); ++r) {
    CHECK(rec.theta[r] == doctest::Approx(e * rec.t_grid[r]).epsilon(1e-12));
    CHECK(std::abs(rec.theta_integrand_imag[r]) <= 1e-12);
  }
  recover_wavefunction(rec, psi0);
  for (std::size_t r = 0; r < rec.t_grid.size(); ++r)
    CHECK(std::abs(rec.autocorr[r] - std::polar(1.0, -e * rec.t_grid[r])) <= 1e-10);
}

TEST_CASE("phase formula undoes an arbitrary time-dependent phase") {
  const auto spec = testutil::benchmark();
  const auto psi0 = initial_product_vector(spec);
  RecoveryRecord rec;
  rec.t_grid = uniform(3.0, 3000);
  const auto exact = propagate_exact_pure(spec, psi0, rec.t_grid);
  for (std::size_t r = 0; r < rec.t_grid.size(); ++r) {
    ComplexVector v = exact[r];
    const double chi = 0.3 * rec.t_grid[r] * rec.t_grid[r] + std::sin(rec.t_grid[r]);
    for (auto& z : v) z *= std::polar(1.0, chi);
    rec.phi.push_back(std::move(v));
  }
  compute_phase(rec, spec, psi0);
  recover_wavefunction(rec, psi0);
  for (std::size_t r = 0; r < rec.t_grid.size(); ++r) {
    CHECK(std::abs(norm(rec.psi[r]) - 1.0) <= 1e-12);
    CHECK(std::abs(inner(exact[r], rec.psi[r]) - 1.0) <= 1e-5);
  }
}

TEST_CASE("failure modes") {
  const auto spec = testutil::benchmark();
  const auto psi0 = initial_product_vector(spec);

  // reference orthogonal to the initial state
  const std::vector<ComplexVector> bad{testutil::down(), testutil::up()};
  const auto res = vector_run(spec, bad, 4, 0.01, 1e-3, 10);
  CHECK_THROWS_AS(recover_raw_vector(res.total, bad), DegenerateReferenceError);
  CHECK_THROWS_AS(recover_raw_vector(res.total, plus_refs()), MissingDataError);

  EnsembleOptions o;
  o.trajectories = 2;
  o.propagation = {0.01, 1e-3, 10};
  const auto plain = run_ensemble(spec, {}, o);
  CHECK_THROWS_AS(recover_raw_vector(plain.total, plus_refs()), MissingDataError);

  RecoveryRecord rec;
  rec.t_grid = {0.0, 0.1, 0.2};
  const ComplexVector orth{0.0, 0.0, 1.0, 0.0};
  rec.phi = {psi0, orth, psi0};
  CHECK_THROWS_AS(compute_phase(rec, spec, psi0), PhaseSingularityError);
}

TEST_CASE("recovered wavefunction on the benchmark at short times") {
  const auto spec = testutil::benchmark();
  const auto psi0 = initial_product_vector(spec);
  const auto refs = plus_refs();
  const auto res = vector_run(spec, refs, 3000, 0.5, 1e-3, 25);
  const auto truth = propagate_exact_pure(spec, psi0, res.total.times);
  const auto rec = recover(res.total, refs, spec, psi0);
  const auto fid = jackknife(res, [&](const EnsembleAccumulator& a) {
    const auto rr = recover(a, refs, spec, psi0);
    std::vector<double> out;
    for (std::size_t r = 0; r < rr.psi.size(); ++r) out.push_back(std::abs(inner(truth[r], rr.psi[r])));
    return out;
  });
  const auto imag = jackknife(res, [&](const EnsembleAccumulator& a) { return recover(a, refs, spec, psi0).theta_integrand_imag; });
  for (std::size_t r = 0; r < rec.psi.size(); ++r) {
    CHECK(fid.value[r] >= 1.0 - 5.0 * fid.std_error[r] - 1e-12);
    // the phase is right, not just the modulus
    CHECK(std::abs(inner(truth[r], rec.psi[r]) - 1.0) <= 0.02);
    CHECK(std::abs(imag.value[r]) <= 5.0 * imag.std_error[r] + 1e-12);
  }
}

TEST_CASE("derivatives") {
  const auto t = uniform(2.0, 200);
  std::vector<cplx> quad, wave;
  for (double x : t) {
    quad.push_back(cplx(x * x, -3.0 * x));
    wave.push_back(std::polar(1.0, std::numbers::pi * x));
  }
  const auto dq = differentiate(quad, t, DerivativeMode::central);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(dq[i] - cplx(2 * t[i], -3.0)) <= 1e-10);

  // exp(i pi t) on [0, 2) samples is periodic: spectral derivative is exact
  std::vector<double> tp(t.begin(), t.end() - 1);
  std::vector<cplx> wp(wave.begin(), wave.end() - 1);
  const auto ds = differentiate(wp, tp, DerivativeMode::spectral);
  for (std::size_t i = 0; i < tp.size(); ++i) CHECK(std::abs(ds[i] - cplx(0.0, std::numbers::pi) * wp[i]) <= 1e-9);

  // non-uniform grid, central mode
  std::vector<double> tn{0.0, 0.1, 0.3, 0.35, 0.6};
  std::vector<cplx> fn;
  for (double x : tn) fn.push_back(x * x);
  const auto dn = differentiate(fn, tn, DerivativeMode::central);
  for (std::size_t i = 0; i < tn.size(); ++i) CHECK(std::abs(dn[i] - 2.0 * tn[i]) <= 1e-12);
  CHECK_THROWS_AS(differentiate(fn, tn, DerivativeMode::spectral), GridError);
}

TEST_CASE("spectrum of an eigenstate") {
  const double e0 = 0.7, t_final = 50.0;
  const auto t = uniform(t_final, 1000);
  std::vector<cplx> ac;
  for (double x : t) ac.push_back(std::polar(1.0, -e0 * x));
  const auto s = autocorrelation_spectrum(ac, t);
  const auto peaks = find_peaks(s);
  REQUIRE(peaks.size() == 1);
  CHECK(std::abs(peaks[0].energy - e0) <= 2.0 * std::numbers::pi / t_final);
  CHECK(s.resolution == doctest::Approx(2.0 * std::numbers::pi / t_final));
}

TEST_CASE("spectrum of two free spins from |++>") {
  const SystemSpec spec = make_system({testutil::spin(1.0), testutil::spin(1.0)}, {},
                                      {ComplexMatrix::projector(ComplexVector{kR, kR}),
                                       ComplexMatrix::projector(ComplexVector{kR, kR})});
  const double t_final = 100.0;
  const auto t = uniform(t_final, 2000);
  const auto psi0 = initial_product_vector(spec);
  const auto psi = propagate_exact_pure(spec, psi0, t);
  const auto ev = herm_eigvals(assemble_full_hamiltonian(spec));
  SpectrumOptions plain;
  plain.window = false;
  const auto windowed = find_peaks(autocorrelation_spectrum(psi, t));
  const auto bare = find_peaks(autocorrelation_spectrum(psi, t, plain));
  REQUIRE(windowed.size() == 3);
  // without the taper, sinc sidelobes also clear the 5% threshold
  const double bin = 2.0 * std::numbers::pi / t_final / 4.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double best = 1e9;
    for (double e : ev) best = std::min(best, std::abs(e - windowed[i].energy));
    CHECK(best <= 2.0 * std::numbers::pi / t_final);
    double nearest = 1e9;
    for (const auto& p : bare) nearest = std::min(nearest, std::abs(p.energy - windowed[i].energy));
    CHECK(nearest <= bin);
  }
}

TEST_CASE("peak error shrinks with the record length") {
  // two close levels; the peak position error is set by the Fourier resolution
  auto worst = [](double t_final) {
    const auto t = uniform(t_final, static_cast<std::size_t>(t_final * 10));
    std::vector<cplx> ac;
    for (double x : t) ac.push_back(0.5 * std::polar(1.0, -0.3 * x) + 0.5 * std::polar(1.0, 0.45 * x));
    SpectrumOptions o;
    o.e_min = -2.0;
    o.e_max = 2.0;
    double w = 0.0;
    for (const auto& p : find_peaks(autocorrelation_spectrum(ac, t, o)))
      w = std::max(w, std::min(std::abs(p.energy - 0.3), std::abs(p.energy + 0.45)));
    return w;
  };
  CHECK(worst(80.0) <= worst(40.0));
}

TEST_CASE("spectrum grid errors") {
  std::vector<double> t{0.0, 0.1, 0.3};
  std::vector<cplx> ac{1.0, 1.0, 1.0};
  CHECK_THROWS_AS(autocorrelation_spectrum(ac, t), GridError);
}
