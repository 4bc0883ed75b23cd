#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "infersched/serialize.hpp"
#include "infersched/simulator.hpp"

namespace infersched {

// Everything a CLI run depends on. Archived as config.json next to the
// outputs; `infersched --config config.json` repeats the run.
struct ExperimentConfig {
  std::string command;     // "simulate", "sweep", "csp solve", ...
  ModelSpec model;
  HardwareSpec hardware;
  std::string preset;      // empty when the command takes none
  SchedulerConfig scheduler;
  WorkloadSpec workload;
  std::string cost = "calibrated"; // or "theoretical"
  // Coefficients used by calibrated runs; filled in before archiving.
  std::optional<LinearCostModel> cost_model;
  WhatIf what_if = WhatIf::None;
  Tokens kv_capacity = 100000;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  Json params = Json::object(); // command-specific knobs
};

Json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const Json& j);

// Calibrated runs without archived coefficients use the default calibration.
CostMode make_cost_mode(const ExperimentConfig& config);

// Accepts either a bare model ({coefficients, r_squared}) or a calibration
// file with a "combined" entry.
LinearCostModel load_cost_model(const std::string& path);

// Seed from --seed, else INFERSCHED_SEED, else `fallback`.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback);

} // namespace infersched
