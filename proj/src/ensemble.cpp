#include "snbd/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "snbd/errors.hpp"
#include "snbd/fingerprint.hpp"

namespace snbd {

namespace {

void hash_matrix(Fnv1a& h, const ComplexMatrix& m) {
  h.u64(m.dim());
  for (const auto& z : m.data()) h.c128(z);
}

std::uint64_t run_fingerprint(const SystemSpec& spec, const std::vector<ObservableSpec>& observables,
                              const EnsembleOptions& options) {
  Fnv1a h;
  h.text("snbd-ensemble-v1");
  for (const auto& p : spec.particles) hash_matrix(h, p.h);
  for (const auto& t : spec.terms) {
    h.f64(t.omega);
    for (const auto& op : t.ops) hash_matrix(h, op);
  }
  for (const auto& rho : spec.initial) hash_matrix(h, rho);
  h.f64(options.propagation.t_final).f64(options.propagation.dt).u64(options.propagation.record_stride);
  for (const auto& obs : observables) {
    h.text(obs.name);
    for (const auto& f : obs.factors) hash_matrix(h, f);
  }
  h.u64(options.full_density ? 1 : 0);
  for (const auto& v : options.reference_vectors) {
    h.u64(v.size());
    for (const auto& z : v) h.c128(z);
  }
  // 0 is reserved for the identity accumulator.
  return h.value() == 0 ? 1 : h.value();
}

EnsembleAccumulator empty_like(const EnsembleAccumulator& shape) {
  EnsembleAccumulator acc;
  acc.fingerprint = shape.fingerprint;
  acc.times = shape.times;
  acc.observable_names = shape.observable_names;
  acc.reference_vectors = shape.reference_vectors;
  const std::size_t nt = shape.times.size();
  acc.obs_sum.assign(shape.obs_sum.size(), std::vector<cplx>(nt));
  acc.obs_shift = shape.obs_shift;
  acc.obs_sum_dev.assign(shape.obs_sum_dev.size(), std::vector<double>(nt));
  acc.obs_sum_sq.assign(shape.obs_sum_sq.size(), std::vector<double>(nt));
  if (shape.has_density()) acc.rho_sum.assign(nt, ComplexMatrix(shape.rho_sum.front().dim()));
  if (shape.has_vectors()) acc.vec_sum.assign(nt, ComplexVector(shape.vec_sum.front().size()));
  const std::size_t np = shape.min_eigenvalue.empty() ? 0 : shape.min_eigenvalue.front().size();
  acc.min_eigenvalue.assign(nt, std::vector<double>(np, std::numeric_limits<double>::infinity()));
  return acc;
}

void require_compatible(const EnsembleAccumulator& a, const EnsembleAccumulator& b) {
  if (a.fingerprint != b.fingerprint || a.times.size() != b.times.size() ||
      a.obs_sum.size() != b.obs_sum.size() || a.has_density() != b.has_density() ||
      a.has_vectors() != b.has_vectors())
    throw IncompatibleAccumulatorError("accumulators come from different run configurations");
}

// Per-trajectory contributions, committed to the block only once the
// trajectory finishes so a skipped trajectory leaves no partial trace.
struct TrajectoryRecord {
  std::vector<std::vector<cplx>> obs;  // [observable][time]
  std::vector<ComplexMatrix> rho;
  std::vector<ComplexVector> vec;
  std::vector<std::vector<double>> min_eig;
  double trace_error = 0.0;
  double hermiticity_error = 0.0;
};

class BlockWorker {
 public:
  BlockWorker(const SystemSpec& spec, const std::vector<ObservableSpec>& observables,
              const EnsembleOptions& options, const EnsembleAccumulator& shape)
      : spec_(spec), observables_(observables), options_(options), shape_(shape) {}

  EnsembleAccumulator run_block(std::size_t first, std::size_t last,
                                const std::function<bool()>& keep_going) {
    EnsembleAccumulator acc = empty_like(shape_);
    for (std::size_t j = first; j < last; ++j) {
      if (!keep_going()) break;
      TrajectoryRecord rec = fresh_record();
      try {
        propagate_trajectory(spec_, options_.propagation, options_.master_seed, j,
                             [&](std::size_t r, const TrajectoryState& s) { record(rec, r, s); });
      } catch (const TrajectoryBlowupError&) {
        if (options_.blowup == BlowupPolicy::skip) {
          ++acc.skipped;
          continue;
        }
        throw;
      }
      commit(acc, rec);
    }
    return acc;
  }

 private:
  TrajectoryRecord fresh_record() const {
    const std::size_t nt = shape_.times.size();
    TrajectoryRecord rec;
    rec.obs.assign(observables_.size(), std::vector<cplx>(nt));
    if (shape_.has_density()) rec.rho.resize(nt);
    if (shape_.has_vectors()) rec.vec.resize(nt);
    rec.min_eig.assign(nt, std::vector<double>(spec_.size()));
    return rec;
  }

  void record(TrajectoryRecord& rec, std::size_t r, const TrajectoryState& s) const {
    const std::size_t n = spec_.size();
    for (std::size_t k = 0; k < n; ++k) {
      const ComplexMatrix& rho = s.rhos[k];
      rec.trace_error = std::max(rec.trace_error, std::abs(rho.trace() - 1.0));
      rec.hermiticity_error = std::max(rec.hermiticity_error, rho.hermiticity_defect());
      rec.min_eig[r][k] = herm_eigvals(rho).front();
    }
    for (std::size_t o = 0; o < observables_.size(); ++o) {
      cplx product = 1.0;
      for (std::size_t k = 0; k < n; ++k) {
        const ComplexMatrix& a = observables_[o].factors[k];
        const ComplexMatrix& rho = s.rhos[k];
        cplx tr = 0.0;
        for (std::size_t i = 0; i < a.dim(); ++i)
          for (std::size_t q = 0; q < a.dim(); ++q) tr += a(i, q) * rho(q, i);
        product *= tr;
      }
      rec.obs[o][r] = product;
    }
    if (shape_.has_density()) {
      ComplexMatrix full = s.rhos[0];
      for (std::size_t k = 1; k < n; ++k) full = kron(full, s.rhos[k]);
      rec.rho[r] = std::move(full);
    }
    if (shape_.has_vectors()) {
      ComplexVector v = s.rhos[0] * options_.reference_vectors[0];
      for (std::size_t k = 1; k < n; ++k) v = kron(v, s.rhos[k] * options_.reference_vectors[k]);
      rec.vec[r] = std::move(v);
    }
  }

  static void commit(EnsembleAccumulator& acc, const TrajectoryRecord& rec) {
    ++acc.count;
    for (std::size_t o = 0; o < rec.obs.size(); ++o)
      for (std::size_t r = 0; r < rec.obs[o].size(); ++r) {
        acc.obs_sum[o][r] += rec.obs[o][r];
        const double dev = rec.obs[o][r].real() - acc.obs_shift[o];
        acc.obs_sum_dev[o][r] += dev;
        acc.obs_sum_sq[o][r] += dev * dev;
      }
    for (std::size_t r = 0; r < rec.rho.size(); ++r) acc.rho_sum[r] += rec.rho[r];
    for (std::size_t r = 0; r < rec.vec.size(); ++r)
      for (std::size_t i = 0; i < rec.vec[r].size(); ++i) acc.vec_sum[r][i] += rec.vec[r][i];
    for (std::size_t r = 0; r < rec.min_eig.size(); ++r)
      for (std::size_t k = 0; k < rec.min_eig[r].size(); ++k)
        acc.min_eigenvalue[r][k] = std::min(acc.min_eigenvalue[r][k], rec.min_eig[r][k]);
    acc.max_trace_error = std::max(acc.max_trace_error, rec.trace_error);
    acc.max_hermiticity_error = std::max(acc.max_hermiticity_error, rec.hermiticity_error);
  }

  const SystemSpec& spec_;
  const std::vector<ObservableSpec>& observables_;
  const EnsembleOptions& options_;
  const EnsembleAccumulator& shape_;
};

void validate_observables(const SystemSpec& spec, const std::vector<ObservableSpec>& observables) {
  for (const auto& obs : observables) {
    if (obs.factors.size() != spec.size())
      throw ShapeError("observable '" + obs.name + "': expected one factor per particle");
    for (std::size_t k = 0; k < spec.size(); ++k) {
      if (obs.factors[k].dim() != spec.particles[k].dim)
        throw ShapeError("observable '" + obs.name + "': factor dimension mismatch for particle " +
                         std::to_string(k));
      if (!obs.factors[k].is_hermitian())
        throw ContractError("observable '" + obs.name + "': factor " + std::to_string(k) +
                            " is not Hermitian");
    }
  }
}

}  // namespace

ComplexMatrix observable_operator(const ObservableSpec& obs) {
  if (obs.factors.empty()) throw ShapeError("observable has no factors");
  ComplexMatrix full = obs.factors.front();
  for (std::size_t k = 1; k < obs.factors.size(); ++k) full = kron(full, obs.factors[k]);
  return full;
}

EnsembleResult run_ensemble(const SystemSpec& spec, const std::vector<ObservableSpec>& observables,
                            const EnsembleOptions& options) {
  validate(spec);
  validate_observables(spec, observables);
  if (options.trajectories == 0) throw ConfigError("ensemble.M", "must be at least 1");
  const TimeGrid grid = make_time_grid(options.propagation.t_final, options.propagation.dt,
                                       options.propagation.record_stride);
  const std::size_t nt = grid.records();
  const std::size_t blocks =
      std::max<std::size_t>(1, std::min(options.trajectories, options.jackknife_blocks));

  EnsembleAccumulator shape;
  shape.fingerprint = run_fingerprint(spec, observables, options);
  for (std::size_t r = 0; r < nt; ++r) shape.times.push_back(grid.time_of_record(r));
  for (const auto& obs : observables) shape.observable_names.push_back(obs.name);
  shape.obs_sum.assign(observables.size(), {});
  shape.obs_sum_dev.assign(observables.size(), {});
  shape.obs_sum_sq.assign(observables.size(), {});
  for (const auto& obs : observables) {
    cplx v = 1.0;
    for (std::size_t k = 0; k < spec.size(); ++k) v *= (obs.factors[k] * spec.initial[k]).trace();
    shape.obs_shift.push_back(v.real());
  }
  shape.min_eigenvalue.assign(1, std::vector<double>(spec.size()));
  if (options.full_density) {
    const std::size_t d = spec.full_dim();
    const double bytes = static_cast<double>(d) * d * 16.0 * nt * (blocks + 1);
    if (bytes > static_cast<double>(options.memory_limit_bytes))
      throw DimensionLimitError("full-density accumulation needs ~" +
                                std::to_string(static_cast<long long>(bytes / 1048576.0)) +
                                " MiB, above the configured limit");
    shape.rho_sum.assign(1, ComplexMatrix(d));
  }
  if (!options.reference_vectors.empty()) {
    if (options.reference_vectors.size() != spec.size())
      throw ShapeError("reference vectors: expected one per particle");
    std::size_t d = 1;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      if (options.reference_vectors[k].size() != spec.particles[k].dim)
        throw ShapeError("reference vector " + std::to_string(k) + ": dimension mismatch");
      d *= spec.particles[k].dim;
    }
    if (d > dimension_limit()) throw DimensionLimitError("vector mode exceeds the dimension limit");
    shape.vec_sum.assign(1, ComplexVector(d));
    shape.reference_vectors = options.reference_vectors;
  }
  shape = empty_like(shape);

  EnsembleResult result;
  result.blocks.resize(blocks);
  std::vector<std::exception_ptr> errors(blocks);
  std::atomic<std::size_t> next_block{0};
  std::atomic<std::size_t> first_failed{blocks};
  std::atomic<bool> cancelled{false};

  auto worker = [&] {
    BlockWorker runner(spec, observables, options, shape);
    for (;;) {
      const std::size_t b = next_block.fetch_add(1);
      if (b >= blocks) return;
      // Blocks below the lowest failure keep running so the reported error
      // does not depend on scheduling.
      auto keep_going = [&] {
        if (options.cancel && options.cancel->load()) {
          cancelled = true;
          return false;
        }
        return b < first_failed.load();
      };
      if (!keep_going()) continue;
      const std::size_t first = b * options.trajectories / blocks;
      const std::size_t last = (b + 1) * options.trajectories / blocks;
      try {
        result.blocks[b] = runner.run_block(first, last, keep_going);
      } catch (...) {
        errors[b] = std::current_exception();
        std::size_t current = first_failed.load();
        while (b < current && !first_failed.compare_exchange_weak(current, b)) {
        }
      }
    }
  };

  const std::size_t nworkers = std::max<std::size_t>(1, std::min(options.workers, blocks));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  result.cancelled = cancelled.load();
  result.total = empty_like(shape);
  for (const auto& block : result.blocks)
    if (!block.is_identity()) result.total = merge_accumulators(result.total, block);
  return result;
}

EnsembleAccumulator merge_accumulators(const EnsembleAccumulator& a, const EnsembleAccumulator& b) {
  if (b.is_identity()) return a;
  if (a.is_identity()) return b;
  require_compatible(a, b);
  EnsembleAccumulator out = a;
  out.count += b.count;
  out.skipped += b.skipped;
  for (std::size_t o = 0; o < out.obs_sum.size(); ++o)
    for (std::size_t r = 0; r < out.times.size(); ++r) {
      out.obs_sum[o][r] += b.obs_sum[o][r];
      out.obs_sum_dev[o][r] += b.obs_sum_dev[o][r];
      out.obs_sum_sq[o][r] += b.obs_sum_sq[o][r];
    }
  for (std::size_t r = 0; r < out.rho_sum.size(); ++r) out.rho_sum[r] += b.rho_sum[r];
  for (std::size_t r = 0; r < out.vec_sum.size(); ++r)
    for (std::size_t i = 0; i < out.vec_sum[r].size(); ++i) out.vec_sum[r][i] += b.vec_sum[r][i];
  for (std::size_t r = 0; r < out.min_eigenvalue.size() && r < b.min_eigenvalue.size(); ++r)
    for (std::size_t k = 0; k < out.min_eigenvalue[r].size(); ++k)
      out.min_eigenvalue[r][k] = std::min(out.min_eigenvalue[r][k], b.min_eigenvalue[r][k]);
  out.max_trace_error = std::max(out.max_trace_error, b.max_trace_error);
  out.max_hermiticity_error = std::max(out.max_hermiticity_error, b.max_hermiticity_error);
  return out;
}

EnsembleAccumulator leave_out(const EnsembleAccumulator& total, const EnsembleAccumulator& block) {
  if (block.is_identity()) return total;
  require_compatible(total, block);
  EnsembleAccumulator out = total;
  out.count -= block.count;
  out.skipped -= block.skipped;
  for (std::size_t o = 0; o < out.obs_sum.size(); ++o)
    for (std::size_t r = 0; r < out.times.size(); ++r) {
      out.obs_sum[o][r] -= block.obs_sum[o][r];
      out.obs_sum_dev[o][r] -= block.obs_sum_dev[o][r];
      out.obs_sum_sq[o][r] -= block.obs_sum_sq[o][r];
    }
  for (std::size_t r = 0; r < out.rho_sum.size(); ++r) out.rho_sum[r] -= block.rho_sum[r];
  for (std::size_t r = 0; r < out.vec_sum.size(); ++r)
    for (std::size_t i = 0; i < out.vec_sum[r].size(); ++i) out.vec_sum[r][i] -= block.vec_sum[r][i];
  return out;
}

std::vector<ComplexMatrix> estimate_density(const EnsembleAccumulator& acc) {
  if (!acc.has_density()) throw MissingDataError("full-density mode was not enabled for this run");
  if (acc.count == 0) throw MissingDataError("no trajectories accumulated");
  std::vector<ComplexMatrix> out;
  out.reserve(acc.rho_sum.size());
  const cplx inv(1.0 / static_cast<double>(acc.count));
  for (const auto& s : acc.rho_sum) out.push_back(s * inv);
  return out;
}

ObservableEstimate estimate_product_observable(const EnsembleAccumulator& acc,
                                               const std::string& name) {
  const auto it = std::find(acc.observable_names.begin(), acc.observable_names.end(), name);
  if (it == acc.observable_names.end()) throw LookupError("unknown observable '" + name + "'");
  if (acc.count == 0) throw MissingDataError("no trajectories accumulated");
  const auto o = static_cast<std::size_t>(it - acc.observable_names.begin());
  const double m = static_cast<double>(acc.count);
  ObservableEstimate est;
  for (std::size_t r = 0; r < acc.times.size(); ++r) {
    const cplx mean = acc.obs_sum[o][r] / m;
    double var = 0.0;
    if (acc.count > 1)
      var = std::max(0.0, (acc.obs_sum_sq[o][r] - acc.obs_sum_dev[o][r] * acc.obs_sum_dev[o][r] / m) / (m - 1.0));
    est.mean.push_back(mean.real());
    est.imag.push_back(mean.imag());
    est.std_error.push_back(std::sqrt(var / m));
  }
  return est;
}

std::vector<cplx> contract_density_observable(const EnsembleAccumulator& acc,
                                              const ObservableSpec& obs) {
  const ComplexMatrix a = observable_operator(obs);
  std::vector<cplx> out;
  for (const auto& rho : estimate_density(acc)) out.push_back((a * rho).trace());
  return out;
}

JackknifeEstimate jackknife(
    const EnsembleResult& result,
    const std::function<std::vector<double>(const EnsembleAccumulator&)>& statistic) {
  JackknifeEstimate est;
  est.value = statistic(result.total);
  // Leave-one-out samples from prefix and suffix merges rather than
  // total - block, which cancels catastrophically when one block dominates.
  const auto& blocks = result.blocks;
  const std::size_t nb = blocks.size();
  std::vector<EnsembleAccumulator> suffix(nb + 1);
  for (std::size_t i = nb; i-- > 0;) suffix[i] = merge_accumulators(blocks[i], suffix[i + 1]);
  std::vector<std::vector<double>> replicas;
  EnsembleAccumulator prefix;
  for (std::size_t i = 0; i < nb; ++i) {
    if (blocks[i].count > 0) replicas.push_back(statistic(merge_accumulators(prefix, suffix[i + 1])));
    prefix = merge_accumulators(prefix, blocks[i]);
  }
  const std::size_t g = replicas.size();
  est.std_error.assign(est.value.size(), 0.0);
  if (g < 2) return est;
  for (std::size_t r = 0; r < est.value.size(); ++r) {
    double mean = 0.0;
    for (const auto& rep : replicas) mean += rep[r];
    mean /= static_cast<double>(g);
    double ss = 0.0;
    for (const auto& rep : replicas) ss += (rep[r] - mean) * (rep[r] - mean);
    est.std_error[r] = std::sqrt(ss * static_cast<double>(g - 1) / static_cast<double>(g));
  }
  return est;
}

}  // namespace snbd
