#include "infersched/verify.hpp"

#include <sstream>

namespace infersched {

const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::TokenLimit: return "token-limit";
    case ViolationKind::Memory: return "memory";
    case ViolationKind::Generation: return "generation";
    case ViolationKind::Termination: return "termination";
    case ViolationKind::TokenAvailability: return "token-availability";
    case ViolationKind::MemoryTrajectory: return "memory-trajectory";
    case ViolationKind::Timing: return "timing";
    case ViolationKind::Arrival: return "arrival";
    case ViolationKind::PhaseMismatch: return "phase-mismatch";
    case ViolationKind::ScheduledAfterCompletion: return "scheduled-after-completion";
  }
  return "?";
}

std::vector<Violation> verify_log(const ScheduleLog& log, const Workload& workload, const VerifyLimits& limits) {
  const std::size_t n = workload.size();
  std::vector<Tokens> m(n, 0);
  std::vector<Tokens> gen(n, 0);
  std::vector<char> done(n, 0);
  std::vector<Violation> out;
  const auto add = [&](ViolationKind k, std::size_t batch, const std::string& detail) {
    out.push_back({k, batch, detail});
  };
  const auto name = [&](RequestIndex i) { return "'" + workload[i].id + "'"; };

  std::size_t next_event = 0;
  Tokens held = 0;
  Seconds prev_end = -1.0;
  std::vector<int> seen(n, -1);
  for (std::size_t bj = 0; bj < log.batches.size(); ++bj) {
    const Batch& b = log.batches[bj];
    if (b.index != bj) add(ViolationKind::Timing, bj, "batch index " + std::to_string(b.index) + " out of sequence");
    while (next_event < log.preemption_events.size() && log.preemption_events[next_event].batch_index <= bj) {
      const auto& ev = log.preemption_events[next_event++];
      if (ev.request >= n) {
        add(ViolationKind::MemoryTrajectory, bj, "preemption of unknown request");
        continue;
      }
      if (done[ev.request]) add(ViolationKind::ScheduledAfterCompletion, bj, "preempted completed request " + name(ev.request));
      if (ev.m_discarded != m[ev.request]) {
        add(ViolationKind::MemoryTrajectory, bj,
            "preemption of " + name(ev.request) + " discards " + std::to_string(ev.m_discarded) +
                " but it holds " + std::to_string(m[ev.request]));
      }
      held -= m[ev.request];
      m[ev.request] = 0;
    }

    if (!(b.duration > 0.0)) add(ViolationKind::Timing, bj, "non-positive duration");
    if (b.start_time < 0.0 || (prev_end >= 0.0 && b.start_time < prev_end - 1e-9 * std::max(1.0, prev_end))) {
      add(ViolationKind::Timing, bj, "batch starts before the previous batch ends");
    }
    prev_end = b.start_time + b.duration;
    if (b.entries.empty()) add(ViolationKind::TokenAvailability, bj, "empty batch");

    Tokens sum_c = 0;
    for (const BatchEntry& e : b.entries) {
      const RequestIndex i = e.request;
      if (i >= n) {
        add(ViolationKind::TokenAvailability, bj, "unknown request index");
        continue;
      }
      if (seen[i] == static_cast<int>(bj)) add(ViolationKind::TokenAvailability, bj, name(i) + " appears twice");
      seen[i] = static_cast<int>(bj);
      sum_c += e.c;
      const Request& r = workload[i];
      if (done[i]) {
        add(ViolationKind::ScheduledAfterCompletion, bj, name(i) + " scheduled after completion");
        continue;
      }
      if (b.start_time < r.arrival_time - 1e-12) add(ViolationKind::Arrival, bj, name(i) + " scheduled before arrival");
      if (e.m_before != m[i]) {
        add(ViolationKind::MemoryTrajectory, bj,
            name(i) + " m_before " + std::to_string(e.m_before) + " but replay has " + std::to_string(m[i]));
      }
      const Tokens seq = r.input_len + gen[i];
      const Tokens avail = seq - m[i];
      if (e.c < 1 || e.c > avail) {
        add(ViolationKind::TokenAvailability, bj,
            name(i) + " c = " + std::to_string(e.c) + " with " + std::to_string(avail) + " available");
      }
      const bool should_generate = e.c == avail;
      if (e.generated_token != should_generate) {
        add(ViolationKind::Generation, bj,
            name(i) + (e.generated_token ? " generates without processing all available tokens"
                                         : " processes all available tokens but does not generate"));
      }
      const bool decode_state = gen[i] >= 1 && avail == 1;
      if ((e.phase_at_batch == Phase::Decode) != decode_state ||
          (e.phase_at_batch != Phase::Decode && e.phase_at_batch != Phase::Prefill)) {
        add(ViolationKind::PhaseMismatch, bj, name(i) + " labelled " + to_string(e.phase_at_batch));
      }
      m[i] += e.c;
      held += e.c;
      if (e.generated_token) ++gen[i];
    }
    if (sum_c > limits.token_limit) {
      add(ViolationKind::TokenLimit, bj,
          "sum c = " + std::to_string(sum_c) + " > C = " + std::to_string(limits.token_limit));
    }
    if (held > limits.kv_capacity) {
      add(ViolationKind::Memory, bj,
          "KVs held " + std::to_string(held) + " > M = " + std::to_string(limits.kv_capacity));
    }
    for (const BatchEntry& e : b.entries) {
      const RequestIndex i = e.request;
      if (i < n && !done[i] && gen[i] >= workload[i].output_len) {
        if (gen[i] > workload[i].output_len) add(ViolationKind::Termination, bj, name(i) + " over-generates");
        done[i] = 1;
        held -= m[i];
        m[i] = 0;
      }
    }
  }
  for (; next_event < log.preemption_events.size(); ++next_event) {
    add(ViolationKind::MemoryTrajectory, log.batches.size(), "preemption after the last batch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (gen[i] != workload[i].output_len) {
      add(ViolationKind::Termination, log.batches.size(),
          name(static_cast<RequestIndex>(i)) + " generated " + std::to_string(gen[i]) + " of " +
              std::to_string(workload[i].output_len));
    }
  }
  return out;
}

std::string describe(const std::vector<Violation>& violations, std::size_t max_lines) {
  std::ostringstream s;
  for (std::size_t k = 0; k < violations.size() && k < max_lines; ++k) {
    s << "batch " << violations[k].batch << ": " << to_string(violations[k].kind) << ": " << violations[k].detail
      << '\n';
  }
  if (violations.size() > max_lines) s << "... " << violations.size() - max_lines << " more\n";
  return s.str();
}

} // namespace infersched
