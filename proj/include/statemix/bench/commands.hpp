#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "statemix/bench/config.hpp"

namespace statemix::bench {

struct CommandContext {
  ExperimentConfig config;
  std::filesystem::path out = ".";
  int threads = 1;
  bool timing = false;
  std::function<void(const std::string&)> log;
};

/// trajectory.csv and trajectory.json for one series of length T seeded by config.seed.
nlohmann::json simulate_command(const CommandContext& ctx);

/// Trains the configured method on fresh training series; writes model.json, history.csv,
/// checkpoints/<label>.json and the training series.
nlohmann::json train_command(const CommandContext& ctx);

/// Filters `series` (a trajectory CSV) with the networks in `checkpoint`, or with the BPF when
/// no checkpoint is given; writes filter.csv and summary.json.
nlohmann::json evaluate_command(const CommandContext& ctx, const std::optional<std::filesystem::path>& checkpoint,
                                const std::filesystem::path& series);

/// Full sweep; writes metrics.csv, summary.csv, failures.json and config.toml.
nlohmann::json sweep_command(const CommandContext& ctx);

/// Finite-difference suites; the report has "passed" and one entry per suite.
nlohmann::json gradcheck_command(const CommandContext& ctx);

}  // namespace statemix::bench
