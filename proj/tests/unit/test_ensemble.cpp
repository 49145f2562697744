#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "snbd/ensemble.hpp"
#include "snbd/errors.hpp"
#include "snbd/exact_oracle.hpp"

using namespace snbd;

namespace {

ObservableSpec product(std::string name, ComplexMatrix a, ComplexMatrix b) {
  return {std::move(name), {std::move(a), std::move(b)}};
}

EnsembleOptions options(std::size_t m, double t_final, double dt, std::size_t stride) {
  EnsembleOptions o;
  o.trajectories = m;
  o.propagation = {t_final, dt, stride};
  o.master_seed = 12345;
  return o;
}

bool same(const EnsembleAccumulator& a, const EnsembleAccumulator& b) {
  return a.count == b.count && a.obs_sum == b.obs_sum && a.obs_sum_sq == b.obs_sum_sq && a.obs_sum_dev == b.obs_sum_dev && a.rho_sum == b.rho_sum &&
         a.vec_sum == b.vec_sum && a.min_eigenvalue == b.min_eigenvalue && a.max_trace_error == b.max_trace_error;
}

}  // namespace

TEST_CASE("M = 1 without interaction reproduces the single trajectory") {
  std::mt19937_64 gen(4);
  ParticleSpec p{2, testutil::random_hermitian(2, gen), Statistics::distinguishable, ""};
  const SystemSpec spec = make_system({p, p}, {}, {testutil::random_density(2, gen), testutil::random_density(2, gen)});
  const auto obs = product("xz", pauli::x(), pauli::z());
  auto opts = options(1, 0.1, 1e-3, 10);
  opts.full_density = true;
  const auto res = run_ensemble(spec, {obs}, opts);
  const auto snaps = propagate_trajectory(spec, opts.propagation, opts.master_seed, 0);
  const auto rho = estimate_density(res.total);
  const auto est = estimate_product_observable(res.total, "xz");
  for (std::size_t r = 0; r < snaps.size(); ++r) {
    CHECK(rho[r] == kron(snaps[r].rhos[0], snaps[r].rhos[1]));
    const double direct = ((pauli::x() * snaps[r].rhos[0]).trace() * (pauli::z() * snaps[r].rhos[1]).trace()).real();
    CHECK(est.mean[r] == direct);
  }
}

TEST_CASE("t = 0 estimate is the initial product state") {
  const auto spec = testutil::benchmark();
  auto opts = options(50, 0.05, 1e-3, 10);
  opts.full_density = true;
  const auto res = run_ensemble(spec, {}, opts);
  CHECK(max_abs_diff(estimate_density(res.total)[0], initial_product_density(spec)) <= 1e-15);
}

TEST_CASE("identity observable") {
  const auto spec = testutil::benchmark();
  const auto id = product("id", ComplexMatrix::identity(2), ComplexMatrix::identity(2));
  const auto res = run_ensemble(spec, {id}, options(64, 0.2, 1e-3, 20));
  const auto est = estimate_product_observable(res.total, "id");
  for (std::size_t r = 0; r < est.mean.size(); ++r) {
    CHECK(std::abs(est.mean[r] - 1.0) <= 1e-12);
    CHECK(est.std_error[r] <= 1e-12);
  }
  CHECK_THROWS_AS(estimate_product_observable(res.total, "nope"), LookupError);
}

TEST_CASE("worker count does not change the accumulator") {
  const auto spec = testutil::benchmark();
  const auto obs = product("zz", pauli::z(), pauli::z());
  auto opts = options(200, 0.2, 1e-3, 20);
  opts.full_density = true;
  opts.reference_vectors = {testutil::up(), testutil::down()};
  opts.workers = 1;
  const auto one = run_ensemble(spec, {obs}, opts);
  for (std::size_t w : {2u, 3u, 8u}) {
    opts.workers = w;
    CHECK(same(run_ensemble(spec, {obs}, opts).total, one.total));
  }
}

TEST_CASE("merge identities and split runs") {
  const auto spec = testutil::benchmark();
  const auto obs = product("zz", pauli::z(), pauli::z());
  auto opts = options(1000, 0.1, 1e-3, 10);
  opts.jackknife_blocks = 4;
  const auto res = run_ensemble(spec, {obs}, opts);
  REQUIRE(res.blocks.size() == 4);
  CHECK(same(merge_accumulators(res.total, EnsembleAccumulator{}), res.total));
  CHECK(same(merge_accumulators(EnsembleAccumulator{}, res.total), res.total));
  CHECK(merge_accumulators(res.blocks[0], res.blocks[1]).count == res.blocks[0].count + res.blocks[1].count);

  // 4 x 250 merged in order equals the single run bitwise
  EnsembleAccumulator merged;
  for (const auto& b : res.blocks) merged = merge_accumulators(merged, b);
  CHECK(same(merged, res.total));
  CHECK(res.blocks[0].count == 250);

  auto other = opts;
  other.propagation.dt = 5e-4;
  const auto diff = run_ensemble(spec, {obs}, other);
  CHECK_THROWS_AS(merge_accumulators(res.total, diff.total), IncompatibleAccumulatorError);
}

TEST_CASE("estimator identity and density invariants") {
  const auto spec = testutil::benchmark();
  const std::vector<ObservableSpec> obs{product("zi", pauli::z(), ComplexMatrix::identity(2)),
                                        product("xx", pauli::x(), pauli::x()),
                                        product("yz", pauli::y(), pauli::z())};
  auto opts = options(300, 0.3, 1e-3, 30);
  opts.full_density = true;
  const auto res = run_ensemble(spec, obs, opts);
  for (const auto& o : obs) {
    const auto a = estimate_product_observable(res.total, o.name);
    const auto b = contract_density_observable(res.total, o);
    for (std::size_t r = 0; r < b.size(); ++r) CHECK(std::abs(a.mean[r] - b[r].real()) <= 1e-10);
  }
  for (const auto& rho : estimate_density(res.total)) {
    CHECK(std::abs(rho.trace() - 1.0) <= 1e-10);
    CHECK(rho.hermiticity_defect() <= 1e-12);
  }
}

TEST_CASE("without interaction the estimate has no Monte Carlo error") {
  std::mt19937_64 gen(8);
  ParticleSpec p{2, testutil::random_hermitian(2, gen), Statistics::distinguishable, ""};
  const SystemSpec spec = make_system({p, p}, {}, {testutil::random_density(2, gen), testutil::random_density(2, gen)});
  auto opts = options(20, 1.0, 1e-4, 1000);
  opts.full_density = true;
  const auto res = run_ensemble(spec, {}, opts);
  const auto exact = propagate_exact(spec, res.total.times);
  const auto est = estimate_density(res.total);
  for (std::size_t r = 0; r < est.size(); ++r) CHECK(trace_distance(est[r], exact[r].rho) <= 1e-3);
}

TEST_CASE("short-time agreement with the oracle") {
  const auto spec = testutil::benchmark();
  const auto zi = product("zi", pauli::z(), ComplexMatrix::identity(2));
  auto opts = options(4000, 0.3, 1e-3, 50);
  opts.full_density = true;
  const auto res = run_ensemble(spec, {zi}, opts);
  const auto exact = propagate_exact(spec, res.total.times);
  const auto truth = exact_observable(exact, zi);
  const auto est = estimate_product_observable(res.total, "zi");
  for (std::size_t r = 0; r < truth.size(); ++r) CHECK(std::abs(est.mean[r] - truth[r]) <= 4 * est.std_error[r] + 1e-12);

  const auto td = jackknife(res, [&](const EnsembleAccumulator& a) {
    const auto rho = estimate_density(a);
    std::vector<double> out;
    for (std::size_t r = 0; r < rho.size(); ++r) out.push_back(trace_distance(rho[r], exact[r].rho));
    return out;
  });
  for (std::size_t r = 1; r < td.value.size(); ++r) CHECK(td.value[r] <= 5 * td.std_error[r]);
}

TEST_CASE("jackknife of the mean equals the naive standard error") {
  const auto spec = testutil::benchmark();
  const auto zi = product("zi", pauli::z(), ComplexMatrix::identity(2));
  auto opts = options(640, 0.1, 1e-3, 100);
  opts.jackknife_blocks = 640;
  const auto res = run_ensemble(spec, {zi}, opts);
  const auto jk = jackknife(res, [](const EnsembleAccumulator& a) { return estimate_product_observable(a, "zi").mean; });
  const auto est = estimate_product_observable(res.total, "zi");
  CHECK(jk.std_error.back() == doctest::Approx(est.std_error.back()).epsilon(1e-8));
}

TEST_CASE("blow-up policies") {
  // Strong coupling over a long horizon drives some trajectories to overflow.
  auto spec = testutil::benchmark(1.0, 2.0);
  auto opts = options(40, 20.0, 1e-2, 100);
  CHECK_THROWS_AS(run_ensemble(spec, {}, opts), TrajectoryBlowupError);
  opts.blowup = BlowupPolicy::skip;
  const auto res = run_ensemble(spec, {}, opts);
  CHECK(res.total.skipped > 0);
  CHECK(res.total.count + res.total.skipped == 40);
}

TEST_CASE("cancellation stops early") {
  const auto spec = testutil::benchmark();
  std::atomic<bool> stop{true};
  auto opts = options(100, 0.1, 1e-3, 10);
  opts.cancel = &stop;
  const auto res = run_ensemble(spec, {}, opts);
  CHECK(res.cancelled);
  CHECK(res.total.count < 100);
}

TEST_CASE("full-density memory gate") {
  const auto spec = testutil::benchmark();
  auto opts = options(10, 1.0, 1e-3, 1);
  opts.full_density = true;
  opts.memory_limit_bytes = 1024;
  CHECK_THROWS_AS(run_ensemble(spec, {}, opts), DimensionLimitError);
}
