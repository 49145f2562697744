#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snbd/ensemble.hpp"
#include "snbd/state_recovery.hpp"
#include "snbd/stochastic_propagator.hpp"
#include "snbd/system_model.hpp"

namespace snbd {

struct TimeConfig {
  double t_final = 1.0;
  double dt = 1e-3;
  std::size_t record_stride = 1;
  friend bool operator==(const TimeConfig&, const TimeConfig&) = default;
};

struct EnsembleConfig {
  std::size_t trajectories = 1000;
  std::uint64_t master_seed = 1;
  std::size_t worker_count = 1;
  bool full_density = false;
  BlowupPolicy blowup_policy = BlowupPolicy::abort;
  PositivityPolicy positivity_policy = PositivityPolicy::report;
  double positivity_tol = -1.0;  // < 0: 100 dt max|omega|
  std::size_t jackknife_blocks = 64;
  friend bool operator==(const EnsembleConfig&, const EnsembleConfig&) = default;
};

struct RecoveryConfig {
  bool enabled = false;
  std::vector<ComplexVector> reference_vectors;  // empty: dominant eigenvectors of rho_k(0)
  bool window = true;
  DerivativeMode derivative = DerivativeMode::central;
  double eps_overlap = 1e-3;
  double eps_ref = 1e-8;
  friend bool operator==(const RecoveryConfig&, const RecoveryConfig&) = default;
};

enum class SpectrumSource { ensemble, oracle };

struct SpectrumConfig {
  SpectrumSource source = SpectrumSource::ensemble;
  double oversample = 4.0;
  double e_min = 0.0;
  double e_max = 0.0;
  double peak_threshold = 0.05;
  friend bool operator==(const SpectrumConfig&, const SpectrumConfig&) = default;
};

struct OutputConfig {
  std::string directory = "snbd_out";
  bool csv = true;
  bool binary = true;
  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
  SystemSpec system;
  TimeConfig time;
  EnsembleConfig ensemble;
  std::vector<ObservableSpec> observables;
  RecoveryConfig recovery;
  SpectrumConfig spectrum;
  OutputConfig output;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Dotted-path overrides such as "ensemble.M=4000" applied before validation.
struct ConfigOverride {
  std::string path;
  std::string value;
};

RunConfig parse_config_text(const std::string& text, const std::vector<ConfigOverride>& overrides = {});
RunConfig parse_config(const std::string& path, const std::vector<ConfigOverride>& overrides = {});

std::string serialize_config(const RunConfig& config);

// Hash of everything that determines numerical output (worker count and the
// output directory are excluded).
std::uint64_t config_hash(const RunConfig& config);

EnsembleOptions ensemble_options(const RunConfig& config);

}  // namespace snbd
