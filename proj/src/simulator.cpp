#include "infersched/simulator.hpp"

#include <algorithm>
#include <numeric>

namespace infersched {

const char* to_string(WhatIf w) {
  switch (w) {
    case WhatIf::None: return "none";
    case WhatIf::InfiniteM: return "infinite-m";
    case WhatIf::TheoreticalCost: return "theoretical";
  }
  return "?";
}

WhatIf parse_what_if(const std::string& s) {
  if (s == "none") return WhatIf::None;
  if (s == "infinite-m") return WhatIf::InfiniteM;
  if (s == "theoretical") return WhatIf::TheoreticalCost;
  throw ValidationError("unknown what-if '" + s + "' (none|infinite-m|theoretical)");
}

SimResult run(const Workload& workload, const SchedulerConfig& scheduler_config, const CostMode& cost,
              const SimOptions& options) {
  validate_workload(workload, options.context_size);
  Workload reqs;
  reqs.reserve(workload.size());
  for (const Request& r : workload) reqs.push_back(r.pristine());
  const std::size_t n = reqs.size();

  Tokens kv_capacity = options.kv_capacity;
  CostMode mode = cost;
  if (options.what_if == WhatIf::InfiniteM) {
    // Enough for every request's peak and any admission reservation at once.
    Scheduler probe(scheduler_config, 1, options.context_size);
    kv_capacity = 0;
    for (const Request& r : reqs) kv_capacity += std::max(peak_kv_demand(r), probe.admission_reservation(r));
  } else if (options.what_if == WhatIf::TheoreticalCost) {
    mode = TheoreticalCost{options.model, options.hw};
  }

  Scheduler sched(scheduler_config, kv_capacity, options.context_size);
  sched.check_workload(reqs);

  std::vector<RequestIndex> order(n);
  std::iota(order.begin(), order.end(), RequestIndex{0});
  std::stable_sort(order.begin(), order.end(), [&](RequestIndex a, RequestIndex b) {
    return reqs[a].arrival_time < reqs[b].arrival_time;
  });

  std::size_t max_batches = options.max_batches;
  if (max_batches == 0) {
    Tokens work = 0;
    for (const Request& r : reqs) work += r.input_len + r.output_len;
    max_batches = static_cast<std::size_t>(work) * 64 + 1024;
  }

  SimResult out;
  out.kv_capacity = kv_capacity;
  ScheduleLog& log = out.log;
  Seconds clock = 0.0;
  std::size_t next_arrival = 0;
  std::size_t completed = 0;
  while (completed < n) {
    while (next_arrival < n && reqs[order[next_arrival]].arrival_time <= clock) {
      sched.enqueue(order[next_arrival++]);
    }
    const std::size_t j = log.batches.size();
    BatchDecision decision = sched.next_batch(reqs, j);
    log.preemption_events.insert(log.preemption_events.end(), decision.preemptions.begin(),
                                 decision.preemptions.end());
    if (decision.entries.empty()) {
      if (next_arrival < n) {
        clock = std::max(clock, reqs[order[next_arrival]].arrival_time);
        continue;
      }
      throw RuntimeFailure("simulation deadlock: no schedulable request and no pending arrivals (" +
                           std::to_string(n - completed) + " unfinished)");
    }
    if (j >= max_batches) throw RuntimeFailure("simulation exceeded " + std::to_string(max_batches) + " batches");

    Batch batch;
    batch.index = j;
    batch.start_time = clock;
    batch.duration = predict_batch_time(decision.entries, mode);
    if (!(batch.duration > 0.0)) {
      throw RuntimeFailure("cost model returned a non-positive batch time (" + std::to_string(batch.duration) + ")");
    }
    batch.entries = std::move(decision.entries);
    clock += batch.duration;

    for (const BatchEntry& e : batch.entries) {
      Request& r = reqs[e.request];
      r.m += e.c;
      if (e.generated_token) {
        ++r.generated;
        if (!r.first_token_time) r.first_token_time = clock;
      }
      if (r.generated == r.output_len) {
        r.phase = Phase::Completed;
        r.completion_time = clock;
        r.m = 0;
        sched.complete(reqs, e.request);
        log.completion_order.push_back(e.request);
        ++completed;
      } else {
        r.phase = is_decode(r) ? Phase::Decode : Phase::Prefill;
      }
    }
    log.batches.push_back(std::move(batch));
  }
  out.metrics = compute_metrics(log, workload);
  out.final_state = std::move(reqs);
  return out;
}

} // namespace infersched
