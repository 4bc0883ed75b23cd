#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "infersched/core.hpp"

namespace infersched {

struct Aggregate {
  double mean = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
  std::size_t count = 0;
};

// Nearest-rank percentiles; an empty input gives all zeros.
Aggregate aggregate(std::vector<double> values);

struct RequestMetrics {
  std::string id;
  Seconds latency = 0.0;
  Seconds ttft = 0.0;
  std::optional<Seconds> tpot; // absent for O = 1
  int preemptions = 0;
};

struct MetricsReport {
  Seconds makespan = 0.0;
  std::vector<RequestMetrics> requests;
  Aggregate latency;
  Aggregate ttft;
  Aggregate tpot;
  double tps = 0.0;
  std::size_t preemption_count = 0;
  Tokens refilled_tokens = 0;
  std::vector<std::pair<Seconds, Tokens>> kv_usage_timeline; // KVs held after each batch
  double progress = 0.0;                                     // generated / processed
  double avg_batch_size = 0.0;                               // requests per batch
  std::size_t num_batches = 0;
  Tokens tokens_processed = 0;
  Tokens tokens_generated = 0;
};

// Everything is re-derived from the log; the workload supplies only
// (id, T, I, O). Throws ValidationError listing unfinished requests.
MetricsReport compute_metrics(const ScheduleLog& log, const Workload& workload);

} // namespace infersched
