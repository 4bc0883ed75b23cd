#include "infersched/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace infersched {

Aggregate aggregate(std::vector<double> values) {
  Aggregate a;
  if (values.empty()) return a;
  std::sort(values.begin(), values.end());
  a.count = values.size();
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.count);
  const auto rank = [&](double p) {
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(a.count)));
    return values[std::clamp<std::size_t>(k, 1, a.count) - 1];
  };
  a.p50 = rank(0.50);
  a.p99 = rank(0.99);
  return a;
}

MetricsReport compute_metrics(const ScheduleLog& log, const Workload& workload) {
  const std::size_t n = workload.size();
  std::vector<Tokens> generated(n, 0);
  std::vector<Tokens> m(n, 0);
  std::vector<std::optional<Seconds>> first(n);
  std::vector<std::optional<Seconds>> done(n);
  std::vector<int> preemptions(n, 0);

  MetricsReport rep;
  rep.num_batches = log.batches.size();
  std::size_t next_event = 0;
  Tokens held = 0;
  std::size_t entries = 0;
  for (const Batch& b : log.batches) {
    while (next_event < log.preemption_events.size() &&
           log.preemption_events[next_event].batch_index <= b.index) {
      const auto& ev = log.preemption_events[next_event++];
      held -= m.at(ev.request);
      m[ev.request] = 0;
      ++preemptions[ev.request];
    }
    const Seconds end = b.start_time + b.duration;
    for (const BatchEntry& e : b.entries) {
      const RequestIndex i = e.request;
      m.at(i) += e.c;
      held += e.c;
      rep.tokens_processed += e.c;
      if (!e.generated_token) continue;
      ++generated[i];
      ++rep.tokens_generated;
      if (!first[i]) first[i] = end;
      if (generated[i] == workload[i].output_len) {
        done[i] = end;
        held -= m[i];
        m[i] = 0;
      }
    }
    entries += b.entries.size();
    rep.kv_usage_timeline.emplace_back(end, held);
  }
  for (; next_event < log.preemption_events.size(); ++next_event) ++preemptions[log.preemption_events[next_event].request];

  std::string unfinished;
  for (std::size_t i = 0; i < n; ++i) {
    if (!done[i]) unfinished += (unfinished.empty() ? "" : ", ") + workload[i].id;
  }
  if (!unfinished.empty()) throw ValidationError("compute_metrics: unfinished requests: " + unfinished);

  Seconds first_arrival = workload.front().arrival_time;
  Seconds last_done = 0.0;
  Tokens total_out = 0;
  std::vector<double> lat, ttft, tpot;
  for (std::size_t i = 0; i < n; ++i) {
    const Request& r = workload[i];
    first_arrival = std::min(first_arrival, r.arrival_time);
    last_done = std::max(last_done, *done[i]);
    total_out += r.output_len;
    RequestMetrics rm;
    rm.id = r.id;
    rm.latency = *done[i] - r.arrival_time;
    rm.ttft = *first[i] - r.arrival_time;
    rm.preemptions = preemptions[i];
    if (r.output_len > 1) rm.tpot = (*done[i] - *first[i]) / static_cast<double>(r.output_len - 1);
    lat.push_back(rm.latency);
    ttft.push_back(rm.ttft);
    if (rm.tpot) tpot.push_back(*rm.tpot);
    rep.requests.push_back(rm);
  }
  rep.makespan = last_done - first_arrival;
  rep.latency = aggregate(lat);
  rep.ttft = aggregate(ttft);
  rep.tpot = aggregate(tpot);
  rep.tps = rep.makespan > 0 ? static_cast<double>(total_out) / rep.makespan : 0.0;
  rep.preemption_count = log.preemption_events.size();
  for (const auto& ev : log.preemption_events) rep.refilled_tokens += ev.m_discarded;
  rep.progress = rep.tokens_processed > 0
                     ? static_cast<double>(rep.tokens_generated) / static_cast<double>(rep.tokens_processed)
                     : 0.0;
  rep.avg_batch_size = rep.num_batches > 0 ? static_cast<double>(entries) / static_cast<double>(rep.num_batches) : 0.0;
  return rep;
}

} // namespace infersched
