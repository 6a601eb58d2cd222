#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "doob/benchmarks.hpp"
#include "doob/config.hpp"
#include "doob/nets.hpp"

namespace doob::cli {

/// Exit codes of the doob-lab executable.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

/// Runs `doob-lab <args...>` (without the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Config helpers shared by the subcommands.

NoiseSchedule schedule_from_config(const Config& cfg);

/// Prior and observation: from `benchmark = name`, or from prior.* and obs.* keys.
Benchmark problem_from_config(const Config& cfg);

/// `model.kind = oracle` (exact score of the prior) or `checkpoint` (`model.checkpoint`).
std::shared_ptr<const EpsModel> model_from_config(const Config& cfg, const Benchmark& problem);

std::shared_ptr<const ConditioningStrategy> strategy_from_config(const Config& cfg,
                                                                 const std::string& name,
                                                                 const Benchmark& problem);

SamplerConfig sampler_from_config(const Config& cfg);

}  // namespace doob::cli
