#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "snbd/counter_rng.hpp"
#include "snbd/errors.hpp"
#include "snbd/stochastic_propagator.hpp"

using namespace snbd;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter streams are reproducible and distinct") {
  CounterRng a(42, 7), b(42, 7), c(42, 8);
  for (int i = 0; i < 5; ++i) {
    const auto x = a.normal_pair(), y = b.normal_pair(), z = c.normal_pair();
    CHECK(x == y);
    CHECK(x != z);
  }
  CHECK(a.position() == 5);
}

TEST_CASE("noise pairing constraint") {
  CounterRng rng(1, 0);
  const auto inc = sample_increments(rng, 2, 4, 1e-3);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t l = 0; l < 4; ++l) {
        if (k == l) {
          CHECK_THROWS_AS(inc(s, k, l), ContractError);
          continue;
        }
        CHECK(inc(s, l, k) == std::conj(inc(s, k, l)));
      }
}

TEST_CASE("noise second moments") {
  // 3 particles, 2 terms: 6 independent channels.
  const double dt = 0.01;
  const std::size_t draws = 100000;
  CounterRng rng(99, 0);
  NoiseIncrement inc(2, 3, dt);
  const std::size_t ch = inc.values().size();
  std::vector<double> abs2(ch), abs2_sq(ch);
  std::vector<cplx> sq(ch);
  std::vector<std::vector<cplx>> cross(ch, std::vector<cplx>(ch));
  for (std::size_t n = 0; n < draws; ++n) {
    sample_increments_into(rng, inc);
    const auto v = inc.values();
    for (std::size_t a = 0; a < ch; ++a) {
      const double w = std::norm(v[a]) / dt;
      abs2[a] += w;
      abs2_sq[a] += w * w;
      sq[a] += v[a] * v[a] / dt;
      for (std::size_t b = a + 1; b < ch; ++b) cross[a][b] += std::conj(v[a]) * v[b] / dt;
    }
  }
  const double m = static_cast<double>(draws);
  for (std::size_t a = 0; a < ch; ++a) {
    const double mean = abs2[a] / m;
    const double se = std::sqrt((abs2_sq[a] / m - mean * mean) / m);
    CHECK(std::abs(mean - 1.0) <= 5 * se);
    CHECK(std::abs(mean - 1.0) <= 0.02);
    // E[dalpha^2] = 0; each of re/im has variance 1/2 per draw (in units of dt)
    const double se0 = std::sqrt(0.5 / m);
    CHECK(std::abs(sq[a].real() / m) <= 5 * se0);
    CHECK(std::abs(sq[a].imag() / m) <= 5 * se0);
    for (std::size_t b = a + 1; b < ch; ++b) {
      CHECK(std::abs(cross[a][b].real() / m) <= 5 * se0);
      CHECK(std::abs(cross[a][b].imag() / m) <= 5 * se0);
    }
  }
}

TEST_CASE("principal square-root branch squares back") {
  const auto spec = testutil::benchmark();
  const auto c = step_coefficients(spec, spec.initial);
  for (std::size_t s = 0; s < spec.terms.size(); ++s) {
    CHECK(std::abs(c.sqrt_factors[s] * c.sqrt_factors[s] - cplx(0.0, -spec.terms[s].omega)) <= 1e-15);
    CHECK(c.sqrt_factors[s].real() >= 0.0);
  }
  // |up>: <sz/sqrt2> = 1/sqrt2 on particle 0, -1/sqrt2 on particle 1 for the z-like term
  double total = 0.0;
  for (std::size_t s = 0; s < spec.terms.size(); ++s) total += std::abs(c.mean_fields[s][0]);
  CHECK(total == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("no interaction: deterministic unitary-generator step") {
  std::mt19937_64 gen(1);
  SystemSpec spec;
  spec.particles = {ParticleSpec{3, testutil::random_hermitian(3, gen), Statistics::distinguishable, ""}};
  spec.initial = {testutil::random_density(3, gen)};
  const double dt = 1e-3;
  auto s0 = initial_trajectory_state(spec, 5, 0);
  const auto s1 = em_step(s0, spec, dt);
  const ComplexMatrix& rho = spec.initial[0];
  const ComplexMatrix expect = rho + commutator(spec.particles[0].h, rho) * cplx(0.0, -dt);
  CHECK(max_abs_diff(s1.rhos[0], expect) <= 1e-15);
  CHECK(s1.t == doctest::Approx(dt));
}

TEST_CASE("one step keeps the trace") {
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto v = testutil::swap_symmetrize(testutil::random_hermitian(9, gen), 3);
    ParticleSpec p{3, testutil::random_hermitian(3, gen), Statistics::distinguishable, ""};
    const SystemSpec spec = make_system({p, p, p}, decompose_pair_interaction(v, 3),
                                        {testutil::random_density(3, gen), testutil::random_density(3, gen),
                                         testutil::random_density(3, gen)});
    const auto next = em_step(initial_trajectory_state(spec, rep, 0), spec, 1e-2);
    for (const auto& rho : next.rhos) {
      CHECK(std::abs(rho.trace() - 1.0) <= 1e-14);
      CHECK(rho.hermiticity_defect() == 0.0);
    }
  }
}

TEST_CASE("mean of single steps equals the drift-only step") {
  const auto spec = testutil::benchmark();
  const double dt = 1e-2;
  const std::size_t m = 10000;
  // Mixed-ish start so the drift is nontrivial.
  SystemSpec s = spec;
  const double r = 1.0 / std::sqrt(2.0);
  s.initial[0] = ComplexMatrix::projector(std::vector<cplx>{r, cplx(0.0, r)});
  EulerMaruyamaStepper stepper(s);
  TrajectoryState drift_only = initial_trajectory_state(s, 0, 0);
  stepper.step_with(drift_only, NoiseIncrement(s.terms.size(), s.size(), dt));

  std::vector<ComplexMatrix> sum(2, ComplexMatrix(2)), sum_sq(2, ComplexMatrix(2));
  for (std::size_t j = 0; j < m; ++j) {
    auto st = initial_trajectory_state(s, 77, j);
    stepper.step(st, dt);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t e = 0; e < 4; ++e) {
        const cplx z = st.rhos[k].data()[e];
        sum[k].data()[e] += z;
        sum_sq[k].data()[e] += cplx(z.real() * z.real(), z.imag() * z.imag());
      }
  }
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t e = 0; e < 4; ++e) {
      const cplx mean = sum[k].data()[e] / double(m);
      const double var_re = sum_sq[k].data()[e].real() / m - mean.real() * mean.real();
      const double var_im = sum_sq[k].data()[e].imag() / m - mean.imag() * mean.imag();
      const cplx want = drift_only.rhos[k].data()[e];
      CHECK(std::abs(mean.real() - want.real()) <= 3 * std::sqrt(var_re / m) + 1e-15);
      CHECK(std::abs(mean.imag() - want.imag()) <= 3 * std::sqrt(var_im / m) + 1e-15);
    }
}

// d Tr rho_k^2 = 2 (N-1) sum_s |omega_s| Var_k(O_s) dt at a pure state: the
// quadratic noise term raises the purity of a pure state above one.
TEST_CASE("purity drift of a pure state under one step") {
  const auto spec = testutil::benchmark(1.0, 0.2);
  const double dt = 1e-3;
  EulerMaruyamaStepper stepper(spec);
  CounterRng rng(3, 0);
  NoiseIncrement inc(spec.terms.size(), spec.size(), dt);
  const std::size_t pairs = 20000;
  double acc = 0.0;
  for (std::size_t n = 0; n < pairs; ++n) {
    sample_increments_into(rng, inc);
    NoiseIncrement neg = inc;
    for (std::size_t s = 0; s < inc.terms(); ++s) neg.stored(s, 0, 1) = -inc(s, 0, 1);
    for (const NoiseIncrement* z : {&inc, &neg}) {
      auto st = initial_trajectory_state(spec, 0, 0);
      stepper.step_with(st, *z);
      acc += 0.5 * ((st.rhos[0] * st.rhos[0]).trace().real() - 1.0);
    }
  }
  const double measured = acc / pairs;
  double expect = 0.0;
  for (const auto& t : spec.terms) {
    const ComplexMatrix& o = t.ops[0];
    const double mean = (o * spec.initial[0]).trace().real();
    const double var = (o * o * spec.initial[0]).trace().real() - mean * mean;
    expect += 2.0 * std::abs(t.omega) * var * dt;
  }
  CHECK(expect == doctest::Approx(0.8 * dt));
  CHECK(measured == doctest::Approx(expect).epsilon(0.03));
}

TEST_CASE("free precession") {
  const double w0 = 1.0, dt = 1e-4, t_final = 1.0;
  SystemSpec spec;
  spec.particles = {testutil::spin(w0)};
  const double r = 1.0 / std::sqrt(2.0);
  spec.initial = {ComplexMatrix::projector(std::vector<cplx>{r, r})};
  PropagationOptions opts{t_final, dt, 1000};
  const auto snaps = propagate_trajectory(spec, opts, 1);
  REQUIRE(snaps.size() == 11);
  for (const auto& s : snaps) {
    const cplx want = 0.5 * std::polar(1.0, -w0 * s.t);
    CHECK(std::abs(s.rhos[0](0, 1) - want) <= 5 * dt);
  }
  const auto rep = positivity_report(snaps);
  for (const auto& row : rep.min_eigenvalues) CHECK(std::abs(row[0]) <= 1e-3);
  CHECK(std::abs(rep.min_eigenvalues.front()[0]) <= 1e-15);
}

TEST_CASE("propagation is bitwise reproducible") {
  const auto spec = testutil::benchmark();
  PropagationOptions opts{0.2, 1e-3, 20};
  const auto a = propagate_trajectory(spec, opts, 11, 3);
  const auto b = propagate_trajectory(spec, opts, 11, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].rhos == b[i].rhos);
  const auto c = propagate_trajectory(spec, opts, 11, 4);
  CHECK(c.back().rhos != a.back().rhos);
}

TEST_CASE("long single-trajectory invariants") {
  const auto spec = testutil::benchmark();
  PropagationOptions opts{1.0, 1e-4, 100};
  const auto snaps = propagate_trajectory(spec, opts, 2024, 0);
  double tr = 0.0, herm = 0.0;
  for (const auto& s : snaps)
    for (const auto& rho : s.rhos) {
      tr = std::max(tr, std::abs(rho.trace() - 1.0));
      herm = std::max(herm, rho.hermiticity_defect());
    }
  CHECK(tr <= 1e-10);
  CHECK(herm <= 1e-12);
}

TEST_CASE("pure initial state has spectrum {0, 1}") {
  const auto spec = testutil::benchmark();
  const auto snaps = propagate_trajectory(spec, PropagationOptions{0.01, 1e-3, 10}, 1);
  const auto ev = herm_eigvals(snaps.front().rhos[0]);
  CHECK(std::abs(ev[0]) <= 1e-15);
  CHECK(ev[1] == doctest::Approx(1.0));
}

TEST_CASE("positivity abort policy") {
  const auto spec = testutil::benchmark();
  PropagationOptions opts{2.0, 1e-3, 100, PositivityPolicy::abort, 1e-3};
  CHECK_THROWS_AS(propagate_trajectory(spec, opts, 1, 0), PositivityViolationError);
}

TEST_CASE("time grid validation") {
  CHECK(make_time_grid(1.0, 0.1, 5).records() == 3);
  CHECK_THROWS_AS(make_time_grid(1.0, 0.3, 1), ConfigError);
  CHECK_THROWS_AS(make_time_grid(1.0, 0.1, 3), ConfigError);
  CHECK_THROWS_AS(make_time_grid(1.0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(make_time_grid(1e9, 1e-9, 1), ConfigError);
}
