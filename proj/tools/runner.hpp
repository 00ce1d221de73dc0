#pragma once

#include <string>

#include "config.hpp"

namespace mk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitViolated = 4;
inline constexpr int kExitIo = 5;

/// Executes one subcommand against a loaded config; writes CSV results plus a
/// JSON run manifest into cfg.out_dir. Returns a process exit code (bound
/// violations map to kExitViolated, estimator failures to kExitRuntime).
int run_subcommand(const std::string& subcommand, const ExperimentConfig& cfg);

}  // namespace mk::cli
