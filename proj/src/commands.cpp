#include "snbd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "snbd/errors.hpp"
#include "snbd/exact_oracle.hpp"
#include "snbd/output.hpp"
#include "snbd/state_recovery.hpp"

namespace snbd {

std::optional<Subcommand> parse_subcommand(const std::string& name) {
  if (name == "run") return Subcommand::run;
  if (name == "oracle") return Subcommand::oracle;
  if (name == "compare") return Subcommand::compare;
  if (name == "spectrum") return Subcommand::spectrum;
  if (name == "validate") return Subcommand::validate;
  return std::nullopt;
}

const char* subcommand_name(Subcommand c) {
  switch (c) {
    case Subcommand::run: return "run";
    case Subcommand::oracle: return "oracle";
    case Subcommand::compare: return "compare";
    case Subcommand::spectrum: return "spectrum";
    case Subcommand::validate: return "validate";
  }
  return "?";
}

namespace {

class Session {
 public:
  Session(const RunConfig& config, Subcommand command, const CommandContext& ctx)
      : config_(config), command_(command), ctx_(ctx), out_(config.output.directory) {}

  int operator()() {
    manifest_.subcommand = subcommand_name(command_);
    manifest_.config_hash = config_hash(config_);
    manifest_.master_seed = config_.ensemble.master_seed;
    try {
      switch (command_) {
        case Subcommand::validate: return validate_only();
        case Subcommand::run: run(); break;
        case Subcommand::oracle: oracle(); break;
        case Subcommand::compare: compare(); break;
        case Subcommand::spectrum: spectrum(); break;
      }
    } catch (const Error& e) {
      return fail(static_cast<int>(e.category()), e.what());
    } catch (const std::exception& e) {
      return fail(static_cast<int>(ErrorCategory::internal), std::string("internal error: ") + e.what());
    }
    if (cancelled_) {
      manifest_.status = "incomplete";
      manifest_.message = "interrupted";
      flush();
      say("interrupted; partial outputs written with an incomplete manifest");
      return kExitCancelled;
    }
    manifest_.status = "complete";
    flush();
    if (ctx_.verbosity != Verbosity::quiet && ctx_.log)
      *ctx_.log << "wrote " << out_.names().size() << " files to " << out_.directory().string() << "\n";
    return 0;
  }

 private:
  const RunConfig& config_;
  Subcommand command_;
  const CommandContext& ctx_;
  OutputSet out_;
  OutputSet::Manifest manifest_;
  bool cancelled_ = false;

  EnsembleResult ensemble_;
  std::vector<ComplexVector> refs_;
  std::vector<FullState> exact_;

  void say(const std::string& line) const {
    if (ctx_.log && ctx_.verbosity != Verbosity::quiet) *ctx_.log << line << "\n";
  }
  void detail(const std::string& line) const {
    if (ctx_.log && ctx_.verbosity == Verbosity::verbose) *ctx_.log << line << "\n";
  }

  int fail(int code, const std::string& message) {
    if (ctx_.log) *ctx_.log << "error: " << message << "\n";
    manifest_.status = "failed";
    manifest_.message = message;
    try {
      flush();
    } catch (const Error& e) {
      if (ctx_.log) *ctx_.log << "error: " << e.what() << "\n";
    }
    return code;
  }

  void flush() { out_.commit(manifest_); }

  void extra(const std::string& key, double v) {
    manifest_.extra.emplace_back(key, std::isfinite(v) ? format_double(v) : std::string("null"));
  }
  void extra(const std::string& key, std::size_t v) { manifest_.extra.emplace_back(key, std::to_string(v)); }

  int validate_only() {
    say("config ok: " + std::to_string(config_.system.size()) + " particles, " +
        std::to_string(config_.system.terms.size()) + " interaction terms");
    return 0;
  }

  std::vector<double> time_grid() const {
    const TimeGrid g = make_time_grid(config_.time.t_final, config_.time.dt, config_.time.record_stride);
    std::vector<double> t;
    for (std::size_t r = 0; r < g.records(); ++r) t.push_back(g.time_of_record(r));
    return t;
  }

  // ---- stochastic ensemble ----

  void run_stochastic(bool force_density, bool want_vectors) {
    EnsembleOptions opts = ensemble_options(config_);
    opts.full_density = opts.full_density || force_density;
    opts.cancel = ctx_.cancel;
    if (want_vectors) {
      refs_ = config_.recovery.reference_vectors.empty() ? default_reference_vectors(config_.system)
                                                          : config_.recovery.reference_vectors;
      opts.reference_vectors = refs_;
    }
    say("ensemble: M=" + std::to_string(opts.trajectories) + " steps=" +
        std::to_string(make_time_grid(config_.time.t_final, config_.time.dt, 1).steps) +
        " workers=" + std::to_string(opts.workers));
    ensemble_ = run_ensemble(config_.system, config_.observables, opts);
    cancelled_ = ensemble_.cancelled;
    const auto& acc = ensemble_.total;
    if (cancelled_ && acc.count == 0) return;

    extra("trajectories", acc.count);
    extra("skipped_trajectories", acc.skipped);
    extra("max_trace_error", acc.max_trace_error);
    extra("max_hermiticity_error", acc.max_hermiticity_error);
    const double tol = config_.ensemble.positivity_tol >= 0.0
                           ? config_.ensemble.positivity_tol
                           : positivity_tolerance(config_.system, config_.time.dt);
    extra("positivity_tolerance", tol);
    double worst = 0.0;
    for (const auto& row : acc.min_eigenvalue)
      for (double v : row) worst = std::min(worst, v);
    extra("min_eigenvalue", worst);
    if (worst < -tol) {
      std::ostringstream msg;
      msg << "warning: 1-body densities lost positivity (min eigenvalue " << worst << ", tolerance "
          << tol << ")";
      say(msg.str());
    }
    if (acc.skipped > 0) say("warning: " + std::to_string(acc.skipped) + " trajectories blew up and were skipped");
    if (acc.count == 0) throw MissingDataError("no trajectories completed");

    if (config_.output.csv) {
      CsvTable inv({"t", "particle", "min_eigenvalue"});
      for (std::size_t r = 0; r < acc.times.size(); ++r)
        for (std::size_t k = 0; k < acc.min_eigenvalue[r].size(); ++k)
          inv.row({format_double(acc.times[r]), std::to_string(k), format_double(acc.min_eigenvalue[r][k])});
      out_.add("positivity.csv", inv.str());

      if (!config_.observables.empty()) {
        std::vector<std::string> head{"t", "observable", "mean", "std_error", "imag"};
        if (acc.has_density()) head.push_back("contracted");
        CsvTable obs(head);
        for (const auto& o : config_.observables) {
          const auto est = estimate_product_observable(acc, o.name);
          std::vector<cplx> contracted;
          if (acc.has_density()) contracted = contract_density_observable(acc, o);
          for (std::size_t r = 0; r < acc.times.size(); ++r) {
            std::vector<std::string> cells{format_double(acc.times[r]), o.name, format_double(est.mean[r]),
                                           format_double(est.std_error[r]), format_double(est.imag[r])};
            if (acc.has_density()) cells.push_back(format_double(contracted[r].real()));
            obs.row(cells);
          }
        }
        out_.add("observables.csv", obs.str());
      }
    }
    if (acc.has_density() && config_.output.binary) out_.add("density.bin", encode_snapshots(estimate_density(acc)));
  }

  RecoveryOptions recovery_options() const {
    RecoveryOptions o;
    o.eps_overlap = config_.recovery.eps_overlap;
    o.eps_ref = config_.recovery.eps_ref;
    o.derivative = config_.recovery.derivative;
    return o;
  }

  RecoveryRecord recover_from(const EnsembleAccumulator& acc, const ComplexVector& psi0) const {
    return recover(acc, refs_, config_.system, psi0, recovery_options());
  }

  void write_recovery(const RecoveryRecord& rec) {
    if (!config_.output.csv) return;
    CsvTable tab({"t", "theta", "theta_integrand_imag", "autocorr_re", "autocorr_im", "phi_tilde_norm"});
    for (std::size_t r = 0; r < rec.t_grid.size(); ++r)
      tab.row({rec.t_grid[r], rec.theta[r], rec.theta_integrand_imag[r], rec.autocorr[r].real(),
               rec.autocorr[r].imag(), norm(rec.phi_tilde[r])});
    out_.add("recovery.csv", tab.str());
    out_.add("wavefunction.csv", wavefunction_csv(rec.t_grid, rec.psi));
  }

  static std::string wavefunction_csv(const std::vector<double>& t, const std::vector<ComplexVector>& psi) {
    CsvTable tab({"t", "index", "re", "im"});
    for (std::size_t r = 0; r < t.size(); ++r)
      for (std::size_t i = 0; i < psi[r].size(); ++i)
        tab.row({format_double(t[r]), std::to_string(i), format_double(psi[r][i].real()),
                 format_double(psi[r][i].imag())});
    return tab.str();
  }

  void run() {
    run_stochastic(false, config_.recovery.enabled);
    if (cancelled_ || !config_.recovery.enabled) return;
    const ComplexVector psi0 = initial_product_vector(config_.system);
    write_recovery(recover_from(ensemble_.total, psi0));
  }

  // ---- exact oracle ----

  void run_oracle() {
    const auto t = time_grid();
    const std::size_t d = config_.system.full_dim();
    say("oracle: full dimension " + std::to_string(d) + ", " + std::to_string(t.size()) + " records");
    exact_ = propagate_exact(config_.system, t);
    if (config_.output.csv && !config_.observables.empty()) {
      CsvTable tab({"t", "observable", "value"});
      for (const auto& o : config_.observables) {
        const auto v = exact_observable(exact_, o);
        for (std::size_t r = 0; r < t.size(); ++r) tab.row({format_double(t[r]), o.name, format_double(v[r])});
      }
      out_.add("oracle_observables.csv", tab.str());
    }
    if (config_.output.binary) {
      std::vector<ComplexMatrix> rhos;
      for (const auto& s : exact_) rhos.push_back(s.rho);
      out_.add("oracle_density.bin", encode_snapshots(rhos));
    }
  }

  bool initial_is_pure() const {
    for (const auto& rho : config_.system.initial)
      if (std::abs(herm_eigvals(rho).back() - 1.0) > 1e-10) return false;
    return true;
  }

  void oracle() {
    run_oracle();
    if (config_.output.csv && initial_is_pure()) {
      const auto t = time_grid();
      const ComplexVector psi0 = initial_product_vector(config_.system);
      out_.add("oracle_wavefunction.csv", wavefunction_csv(t, propagate_exact_pure(config_.system, psi0, t)));
    }
  }

  // ---- comparison ----

  void compare() {
    run_oracle();
    const bool recovery = config_.recovery.enabled;
    run_stochastic(true, recovery);
    if (cancelled_) return;
    const auto& acc = ensemble_.total;
    const std::size_t nt = acc.times.size();

    const auto td = jackknife(ensemble_, [&](const EnsembleAccumulator& a) {
      const auto rho = estimate_density(a);
      std::vector<double> out(nt);
      for (std::size_t r = 0; r < nt; ++r) out[r] = trace_distance(rho[r], exact_[r].rho);
      return out;
    });

    std::vector<std::string> head{"t", "trace_distance", "trace_distance_error"};
    std::vector<std::vector<double>> oracle_obs;
    std::vector<ObservableEstimate> est;
    for (const auto& o : config_.observables) {
      head.push_back(o.name + "_residual");
      head.push_back(o.name + "_std_error");
      oracle_obs.push_back(exact_observable(exact_, o));
      est.push_back(estimate_product_observable(acc, o.name));
    }

    std::optional<JackknifeEstimate> fid;
    if (recovery) {
      const ComplexVector psi0 = initial_product_vector(config_.system);
      const auto truth = propagate_exact_pure(config_.system, psi0, acc.times);
      const RecoveryRecord rec = recover_from(acc, psi0);
      write_recovery(rec);
      fid = jackknife(ensemble_, [&](const EnsembleAccumulator& a) {
        const RecoveryRecord rr = recover_from(a, psi0);
        std::vector<double> out(nt);
        for (std::size_t r = 0; r < nt; ++r) out[r] = std::abs(inner(truth[r], rr.psi[r]));
        return out;
      });
      head.push_back("fidelity");
      head.push_back("fidelity_error");
    }

    CsvTable tab(head);
    double worst_ratio = 0.0, worst_td = 0.0;
    for (std::size_t r = 0; r < nt; ++r) {
      std::vector<double> row{acc.times[r], td.value[r], td.std_error[r]};
      worst_td = std::max(worst_td, td.value[r]);
      if (td.std_error[r] > 0.0) worst_ratio = std::max(worst_ratio, td.value[r] / td.std_error[r]);
      for (std::size_t o = 0; o < est.size(); ++o) {
        row.push_back(est[o].mean[r] - oracle_obs[o][r]);
        row.push_back(est[o].std_error[r]);
      }
      if (fid) {
        row.push_back(fid->value[r]);
        row.push_back(fid->std_error[r]);
      }
      tab.row(row);
    }
    out_.add("compare.csv", tab.str());
    extra("max_trace_distance", worst_td);
    extra("max_trace_distance_over_error", worst_ratio);
    std::ostringstream msg;
    msg << "compare: max trace distance " << worst_td << ", max ratio to jackknife error " << worst_ratio;
    if (fid) {
      const double lo = *std::min_element(fid->value.begin(), fid->value.end());
      extra("min_fidelity", lo);
      msg << ", min fidelity " << lo;
    }
    say(msg.str());
  }

  // ---- spectrum ----

  void spectrum() {
    const ComplexVector psi0 = initial_product_vector(config_.system);
    std::vector<double> t;
    std::vector<cplx> autocorr;
    if (config_.spectrum.source == SpectrumSource::oracle) {
      t = time_grid();
      for (const auto& v : propagate_exact_pure(config_.system, psi0, t)) autocorr.push_back(inner(psi0, v));
    } else {
      run_stochastic(false, true);
      if (cancelled_) return;
      const RecoveryRecord rec = recover_from(ensemble_.total, psi0);
      write_recovery(rec);
      t = rec.t_grid;
      autocorr = rec.autocorr;
    }
    SpectrumOptions so;
    so.window = config_.recovery.window;
    so.oversample = config_.spectrum.oversample;
    so.e_min = config_.spectrum.e_min;
    so.e_max = config_.spectrum.e_max;
    const Spectrum spec = autocorrelation_spectrum(autocorr, t, so);
    const auto peaks = find_peaks(spec, config_.spectrum.peak_threshold);

    CsvTable s({"energy", "intensity"});
    for (std::size_t i = 0; i < spec.energies.size(); ++i) s.row({spec.energies[i], spec.intensity[i]});
    out_.add("spectrum.csv", s.str());

    const auto eig = herm_eigvals(assemble_full_hamiltonian(config_.system));
    CsvTable p({"energy", "intensity", "nearest_eigenvalue", "distance"});
    for (const auto& pk : peaks) {
      double best = eig.front();
      for (double e : eig)
        if (std::abs(e - pk.energy) < std::abs(best - pk.energy)) best = e;
      p.row({pk.energy, pk.intensity, best, std::abs(best - pk.energy)});
    }
    out_.add("peaks.csv", p.str());
    extra("resolution", spec.resolution);
    extra("peaks", peaks.size());
    std::ostringstream msg;
    msg << "spectrum: " << peaks.size() << " peaks, resolution " << spec.resolution;
    say(msg.str());
    for (const auto& pk : peaks) {
      std::ostringstream line;
      line << "  E = " << pk.energy << "  I = " << pk.intensity;
      detail(line.str());
    }
  }
};

}  // namespace

int execute(const RunConfig& config, Subcommand command, const CommandContext& context) {
  return Session(config, command, context)();
}

}  // namespace snbd
