#include "infersched/scheduler.hpp"

#include <algorithm>
#include <sstream>

namespace infersched {

const char* to_string(InsertionPolicy p) {
  switch (p) {
    case InsertionPolicy::PrefillFirst: return "prefill-first";
    case InsertionPolicy::DecodeFirst: return "decode-first";
    case InsertionPolicy::RankByInput: return "rank-input";
    case InsertionPolicy::RankByOutput: return "rank-output";
  }
  return "?";
}

const char* to_string(ReplacementPolicy p) {
  switch (p) {
    case ReplacementPolicy::NRF: return "nrf";
    case ReplacementPolicy::SRF: return "srf";
    case ReplacementPolicy::PreemptionFree: return "preemption-free";
  }
  return "?";
}

const char* to_string(ReservationMode m) {
  switch (m) {
    case ReservationMode::InputOnly: return "input-only";
    case ReservationMode::PeakDemand: return "peak-demand";
    case ReservationMode::FullContext: return "full-context";
  }
  return "?";
}

const char* to_string(AllocDecision d) {
  switch (d) {
    case AllocDecision::Admit: return "admit";
    case AllocDecision::RejectTokenLimit: return "reject-token-limit";
    case AllocDecision::RejectMemory: return "reject-memory";
  }
  return "?";
}

bool SchedulerConfig::reads_output_length() const {
  return insertion_policy == InsertionPolicy::RankByOutput ||
         reservation_mode == ReservationMode::PeakDemand;
}

void SchedulerConfig::validate() const {
  if (token_limit < 1) throw ValidationError("scheduler '" + name + "': token limit C must be >= 1");
  if (replacement_policy == ReplacementPolicy::PreemptionFree &&
      reservation_mode == ReservationMode::InputOnly) {
    throw ValidationError("scheduler '" + name +
                          "': preemption-free replacement needs peak-demand or full-context reservation");
  }
  if (chunked_prefill && !hybrid_batching) {
    throw ValidationError("scheduler '" + name + "': chunked prefill requires hybrid batching");
  }
  if (reads_output_length() && !hypothetical) {
    throw ValidationError("scheduler '" + name +
                          "' reads ground-truth output lengths; rerun with --hypothetical");
  }
}

bool is_decode(const Request& r) {
  return r.phase != Phase::Waiting && r.phase != Phase::Completed && r.generated >= 1 &&
         tokens_available(r) == 1;
}

std::vector<std::vector<RequestIndex>> group_requests(const std::vector<RequestIndex>& waiting,
                                                      const std::vector<RequestIndex>& running,
                                                      const Workload& requests,
                                                      const SchedulerConfig& config) {
  const auto by_arrival = [&](RequestIndex a, RequestIndex b) {
    if (requests[a].arrival_time != requests[b].arrival_time) {
      return requests[a].arrival_time < requests[b].arrival_time;
    }
    return a < b;
  };
  std::vector<RequestIndex> decodes;
  std::vector<RequestIndex> prefills;
  for (RequestIndex i : running) (is_decode(requests[i]) ? decodes : prefills).push_back(i);
  std::vector<RequestIndex> fresh = waiting;
  std::sort(decodes.begin(), decodes.end(), by_arrival);
  std::sort(prefills.begin(), prefills.end(), by_arrival);
  std::sort(fresh.begin(), fresh.end(), by_arrival);

  switch (config.insertion_policy) {
    case InsertionPolicy::PrefillFirst: {
      std::vector<RequestIndex> first = fresh;
      first.insert(first.end(), prefills.begin(), prefills.end());
      std::sort(first.begin(), first.end(), by_arrival);
      return {first, decodes};
    }
    case InsertionPolicy::DecodeFirst:
      return {decodes, prefills, fresh};
    case InsertionPolicy::RankByInput:
    case InsertionPolicy::RankByOutput: {
      if (config.insertion_policy == InsertionPolicy::RankByOutput && !config.hypothetical) {
        throw ValidationError("rank-by-output reads ground-truth output lengths; rerun with --hypothetical");
      }
      const bool by_input = config.insertion_policy == InsertionPolicy::RankByInput;
      std::vector<RequestIndex> all = fresh;
      all.insert(all.end(), prefills.begin(), prefills.end());
      all.insert(all.end(), decodes.begin(), decodes.end());
      std::sort(all.begin(), all.end(), [&](RequestIndex a, RequestIndex b) {
        const Tokens ka = by_input ? requests[a].input_len : requests[a].output_len;
        const Tokens kb = by_input ? requests[b].input_len : requests[b].output_len;
        if (ka != kb) return ka < kb;
        return by_arrival(a, b);
      });
      return {all};
    }
  }
  return {};
}

AllocDecision can_allocate(Tokens c, Tokens batch_tokens, Tokens token_limit, Tokens holdings_without_cand,
                           Tokens cand_holding, Tokens kv_capacity) {
  if (batch_tokens + c > token_limit) return AllocDecision::RejectTokenLimit;
  if (holdings_without_cand + cand_holding > kv_capacity) return AllocDecision::RejectMemory;
  return AllocDecision::Admit;
}

Tokens chunk_prefill(Tokens available, Tokens budget, bool chunked_prefill) {
  if (budget <= 0 || available <= 0) return 0;
  if (available <= budget) return available;
  return chunked_prefill ? budget : 0;
}

std::optional<RequestIndex> select_victim(ReplacementPolicy policy, const std::vector<VictimInfo>& pool) {
  if (policy == ReplacementPolicy::PreemptionFree || pool.empty()) return std::nullopt;
  // "newer" = later arrival, then later admission, then higher index.
  const auto newer = [](const VictimInfo& a, const VictimInfo& b) {
    if (a.arrival != b.arrival) return a.arrival > b.arrival;
    if (a.admission != b.admission) return a.admission > b.admission;
    return a.request > b.request;
  };
  const VictimInfo* best = &pool.front();
  for (const VictimInfo& v : pool) {
    if (policy == ReplacementPolicy::NRF) {
      if (newer(v, *best)) best = &v;
    } else {
      if (v.m < best->m || (v.m == best->m && newer(v, *best))) best = &v;
    }
  }
  return best->request;
}

Tokens preempt(Request& r) {
  const Tokens discarded = r.m;
  r.m = 0;
  r.reserved = 0;
  r.phase = Phase::Waiting;
  ++r.preempt_count;
  return discarded;
}

Scheduler::Scheduler(SchedulerConfig config, Tokens kv_capacity, Tokens context_size)
    : config_(std::move(config)),
      kv_capacity_(kv_capacity),
      context_size_(context_size),
      histogram_(config_.histogram, context_size) {
  config_.validate();
  if (kv_capacity_ < 1) throw ValidationError("KV cache capacity M must be >= 1");
}

Tokens Scheduler::admission_reservation(const Request& r) const {
  switch (config_.reservation_mode) {
    case ReservationMode::InputOnly: return sequence_length(r);
    case ReservationMode::PeakDemand: return peak_kv_demand(r);
    case ReservationMode::FullContext: return context_size_;
  }
  return 0;
}

void Scheduler::check_workload(const Workload& requests) const {
  validate_workload(requests, context_size_);
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const Request& r = requests[i];
    const Tokens need = std::max(peak_kv_demand(r), admission_reservation(r.pristine()));
    std::ostringstream where;
    where << "request #" << i << " ('" << r.id << "')";
    if (need > kv_capacity_) {
      throw ValidationError(where.str() + " needs " + std::to_string(need) +
                            " KV slots but M = " + std::to_string(kv_capacity_));
    }
    if (!config_.chunked_prefill) {
      const Tokens longest_fill = config_.replacement_policy == ReplacementPolicy::PreemptionFree
                                      ? r.input_len
                                      : peak_kv_demand(r);
      if (longest_fill > config_.token_limit) {
        throw ValidationError(where.str() + " may need a " + std::to_string(longest_fill) +
                              "-token fill but C = " + std::to_string(config_.token_limit) +
                              " and chunked prefill is off");
      }
    }
  }
}

void Scheduler::enqueue(RequestIndex i) { waiting_.push_back(i); }

Tokens Scheduler::holdings(const Workload& requests) const {
  Tokens total = 0;
  for (RequestIndex i : running_) total += std::max(requests[i].reserved, requests[i].m);
  return total;
}

BatchDecision Scheduler::next_batch(Workload& requests, std::size_t batch_index) {
  BatchDecision out;
  const auto groups = group_requests(waiting_, running_, requests, config_);
  const std::size_t n = requests.size();
  if (admission_seq_.size() < n) admission_seq_.resize(n, 0);

  std::vector<int> group_of(n, -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (RequestIndex i : groups[g]) group_of[i] = static_cast<int>(g);
  }
  std::vector<char> in_batch(n, 0);
  std::vector<char> kicked(n, 0);
  std::vector<char> is_running(n, 0);
  std::vector<Tokens> held(n, 0);
  Tokens total_held = 0;
  for (RequestIndex i : running_) {
    is_running[i] = 1;
    held[i] = std::max(requests[i].reserved, requests[i].m);
    total_held += held[i];
  }
  Tokens live_peak_sum = 0;
  std::size_t live_count = running_.size();
  if (config_.defer_with_histogram) {
    for (RequestIndex i : running_) live_peak_sum += predicted_peak(histogram_, requests[i]);
  }
  std::vector<RequestIndex> admitted;
  Tokens batch_tokens = 0;
  std::optional<bool> batch_is_decode;

  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (RequestIndex cand : groups[g]) {
      if (kicked[cand]) continue;
      const Tokens budget = config_.token_limit - batch_tokens;
      if (budget <= 0) break;
      Request& r = requests[cand];
      const bool waiting = !is_running[cand];
      const bool decode = !waiting && is_decode(r);
      if (!config_.hybrid_batching && batch_is_decode && *batch_is_decode != decode) continue;

      const Tokens available = tokens_available(r);
      const Tokens c = decode ? (available <= budget ? available : 0)
                              : chunk_prefill(available, budget, config_.chunked_prefill);
      if (c == 0) continue;

      // Same rule as should_defer, with the running sum kept incrementally.
      if (waiting && config_.defer_with_histogram && live_count > 0 &&
          live_peak_sum + predicted_peak(histogram_, r) > kv_capacity_) {
        continue;
      }

      bool admit = false;
      while (true) {
        const Tokens before = waiting ? 0 : held[cand];
        const Tokens reserve = waiting ? admission_reservation(r) : r.reserved;
        const Tokens after = std::max(reserve, r.m + c);
        const auto decision = can_allocate(c, batch_tokens, config_.token_limit, total_held - before, after,
                                           kv_capacity_);
        if (decision == AllocDecision::Admit) {
          if (waiting) {
            r.reserved = reserve;
            r.phase = Phase::Prefill;
            is_running[cand] = 1;
            admission_seq_[cand] = ++next_admission_;
            admitted.push_back(cand);
            if (config_.defer_with_histogram) live_peak_sum += predicted_peak(histogram_, r);
            ++live_count;
          }
          total_held += after - before;
          held[cand] = after;
          admit = true;
          break;
        }
        // Waiting contenders hold nothing and never evict running requests.
        if (decision != AllocDecision::RejectMemory || waiting) break;

        std::vector<VictimInfo> pool;
        for (RequestIndex i = 0; i < n; ++i) {
          if (!is_running[i] || kicked[i] || in_batch[i]) continue;
          if (group_of[i] < static_cast<int>(g)) continue;
          pool.push_back({i, requests[i].m, requests[i].arrival_time, admission_seq_[i]});
        }
        const auto victim = select_victim(config_.replacement_policy, pool);
        if (!victim) break;
        if (config_.defer_with_histogram) live_peak_sum -= predicted_peak(histogram_, requests[*victim]);
        --live_count;
        total_held -= held[*victim];
        held[*victim] = 0;
        kicked[*victim] = 1;
        is_running[*victim] = 0;
        out.preemptions.push_back({batch_index, *victim, preempt(requests[*victim])});
        if (*victim == cand) break;
      }
      if (!admit) continue;

      in_batch[cand] = 1;
      batch_tokens += c;
      out.entries.push_back({cand, c, r.m, decode ? Phase::Decode : Phase::Prefill, c == available});
      if (!batch_is_decode) batch_is_decode = decode;
    }
  }

  // Rebuild the queues: running keeps admission order, waiting is re-sorted
  // by arrival when the group function runs.
  std::vector<RequestIndex> next_running;
  for (RequestIndex i : running_) {
    if (!kicked[i]) next_running.push_back(i);
  }
  next_running.insert(next_running.end(), admitted.begin(), admitted.end());
  running_ = std::move(next_running);
  std::vector<RequestIndex> next_waiting;
  for (RequestIndex i : waiting_) {
    if (!is_running[i]) next_waiting.push_back(i);
  }
  for (RequestIndex i = 0; i < n; ++i) {
    if (kicked[i]) next_waiting.push_back(i);
  }
  waiting_ = std::move(next_waiting);
  return out;
}

void Scheduler::complete(Workload& requests, RequestIndex i) {
  running_.erase(std::remove(running_.begin(), running_.end(), i), running_.end());
  requests[i].reserved = 0;
  histogram_.observe(requests[i].input_len, requests[i].output_len);
}

} // namespace infersched
