// snbd: stochastic N-body density engine, command-line front end.
//
//   snbd <run|oracle|compare|spectrum|validate> --config FILE [--seed N]
//        [--workers N] [--out DIR] [--quiet|--verbose] [--section.field=VALUE ...]

#include <atomic>
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "snbd/commands.hpp"
#include "snbd/config.hpp"
#include "snbd/errors.hpp"

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_signal(int) { g_cancel.store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic N-body density engine"};
  app.allow_extras();

  std::string command, config_path, out_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  bool quiet = false, verbose = false;

  app.add_option("command", command, "run | oracle | compare | spectrum | validate")
      ->required()
      ->check(CLI::IsMember({"run", "oracle", "compare", "spectrum", "validate"}));
  app.add_option("--config", config_path, "Configuration file (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides ensemble.master_seed)");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads (overrides ensemble.worker_count)")
                          ->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides output.directory)");
  auto* quiet_flag = app.add_flag("-q,--quiet", quiet, "Only print errors");
  app.add_flag("-v,--verbose", verbose, "Print extra detail")->excludes(quiet_flag);
  app.footer("Any config field can be overridden with a dotted path, e.g. --ensemble.M=4000.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::vector<snbd::ConfigOverride> overrides;
  for (const std::string& arg : app.remaining()) {
    const auto eq = arg.find('=');
    if (arg.rfind("--", 0) != 0 || eq == std::string::npos || eq <= 2) {
      std::cerr << "error: unrecognized argument '" << arg << "' (overrides look like --a.b=value)\n";
      return static_cast<int>(snbd::ErrorCategory::config);
    }
    overrides.push_back({arg.substr(2, eq - 2), arg.substr(eq + 1)});
  }
  if (*seed_opt) overrides.push_back({"ensemble.master_seed", std::to_string(seed)});
  if (*workers_opt) overrides.push_back({"ensemble.worker_count", std::to_string(workers)});
  if (*out_opt) overrides.push_back({"output.directory", nlohmann::json(out_dir).dump()});

  snbd::RunConfig config;
  try {
    config = snbd::parse_config(config_path, overrides);
  } catch (const snbd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  snbd::CommandContext ctx;
  ctx.log = &std::cerr;
  ctx.verbosity = quiet ? snbd::Verbosity::quiet : verbose ? snbd::Verbosity::verbose : snbd::Verbosity::normal;
  ctx.cancel = &g_cancel;
  return snbd::execute(config, *snbd::parse_subcommand(command), ctx);
}
