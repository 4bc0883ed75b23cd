#pragma once

#include <string>

#include "infersched/costmodel.hpp"
#include "infersched/metrics.hpp"
#include "infersched/scheduler.hpp"

namespace infersched {

enum class WhatIf { None, InfiniteM, TheoreticalCost };

const char* to_string(WhatIf w);
WhatIf parse_what_if(const std::string& s);

struct SimOptions {
  Tokens kv_capacity = 100000; // M
  Tokens context_size = 4096;  // S
  WhatIf what_if = WhatIf::None;
  // Used by the TheoreticalCost what-if.
  ModelSpec model;
  HardwareSpec hw;
  // Livelock guard; 0 picks a bound from the workload size.
  std::size_t max_batches = 0;
};

struct SimResult {
  ScheduleLog log;
  MetricsReport metrics;
  Workload final_state;
  Tokens kv_capacity = 0; // after what-if adjustment
};

// Deterministic batch-by-batch run of the scheduler over the workload.
SimResult run(const Workload& workload, const SchedulerConfig& scheduler, const CostMode& cost,
              const SimOptions& options = {});

} // namespace infersched
