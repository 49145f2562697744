#pragma once

#include <atomic>
#include <iosfwd>
#include <optional>
#include <string>

#include "snbd/config.hpp"

namespace snbd {

enum class Subcommand { run, oracle, compare, spectrum, validate };

std::optional<Subcommand> parse_subcommand(const std::string& name);
const char* subcommand_name(Subcommand c);

enum class Verbosity { quiet, normal, verbose };

struct CommandContext {
  std::ostream* log = nullptr;  // progress and summaries; null is silent
  Verbosity verbosity = Verbosity::normal;
  const std::atomic<bool>* cancel = nullptr;
};

inline constexpr int kExitCancelled = 130;

// Runs one subcommand and writes its files plus manifest.json into
// config.output.directory. Returns the process exit status: 0 on success,
// the error category otherwise (partial outputs and a manifest marked failed
// or incomplete are still written).
int execute(const RunConfig& config, Subcommand command, const CommandContext& context = {});

}  // namespace snbd
