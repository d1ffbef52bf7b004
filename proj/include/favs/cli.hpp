#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace favs::cli {

/// Exit code plus the files a command produced, in creation order.
struct CommandResult {
  int exit_code = 0;
  std::vector<std::string> artifacts;
};

struct GenFixtureOpts {
  std::uint64_t seed = 42;
  std::size_t frames = 2;
  std::size_t size = 64;
  std::size_t channels = 32;
  std::string texture = "checkerboard";
  std::string motion = "linear";
  std::string out = "fixture.ften";
};

struct DecomposeOpts {
  std::string input;
  std::string tensor = "frames";
  std::string tau = "1.0,0.6,0.3,0.1";
  std::string out_dir = "decompose";
};

struct RunOpts {
  std::string config;
  std::string params;
  std::string fixture;
  std::string out = "run";
  bool oracle_mask = false;
};

struct RouteStatsOpts {
  std::string config;
  std::string params;
  std::string fixture;
  std::string out = "route_stats.csv";
};

struct GenParamsOpts {
  std::string config;
  std::string out = "params.ften";
};

/// Exit codes: 0 success, 1 invalid input or arguments, 2 filesystem failure.
CommandResult cmd_gen_fixture(const GenFixtureOpts& opts);
CommandResult cmd_decompose(const DecomposeOpts& opts);
CommandResult cmd_gen_params(const GenParamsOpts& opts);
CommandResult cmd_run(const RunOpts& opts);
CommandResult cmd_route_stats(const RouteStatsOpts& opts);

/// Shortest round-trip decimal form, locale independent.
std::string fmt_double(double v);

/// Apply the FAVS_THREADS override (default cap 1). Rejects garbage values.
void apply_thread_env();

}  // namespace favs::cli
