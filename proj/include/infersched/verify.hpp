#pragma once

#include <string>
#include <vector>

#include "infersched/core.hpp"

namespace infersched {

enum class ViolationKind {
  TokenLimit,
  Memory,
  Generation,
  Termination,
  TokenAvailability,
  MemoryTrajectory,
  Timing,
  Arrival,
  PhaseMismatch,
  ScheduledAfterCompletion,
};

const char* to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::size_t batch = 0;
  std::string detail;
};

struct VerifyLimits {
  Tokens token_limit = 4096; // C
  Tokens kv_capacity = 100000; // M
};

// Replays the log against the static workload (T, I, O) without trusting
// any simulator state. Memory counts every request that holds KVs during a
// batch, including one that completes in it.
std::vector<Violation> verify_log(const ScheduleLog& log, const Workload& workload, const VerifyLimits& limits);

std::string describe(const std::vector<Violation>& violations, std::size_t max_lines = 10);

} // namespace infersched
