#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "infersched/core.hpp"
#include "infersched/histogram.hpp"

namespace infersched {

enum class InsertionPolicy { PrefillFirst, DecodeFirst, RankByInput, RankByOutput };
enum class ReplacementPolicy { NRF, SRF, PreemptionFree };
enum class ReservationMode { InputOnly, PeakDemand, FullContext };

const char* to_string(InsertionPolicy p);
const char* to_string(ReplacementPolicy p);
const char* to_string(ReservationMode m);

struct SchedulerConfig {
  std::string name = "custom";
  InsertionPolicy insertion_policy = InsertionPolicy::PrefillFirst;
  ReplacementPolicy replacement_policy = ReplacementPolicy::NRF;
  ReservationMode reservation_mode = ReservationMode::InputOnly;
  bool hybrid_batching = false;
  bool chunked_prefill = false;
  Tokens token_limit = 4096; // C
  bool defer_with_histogram = false;
  // Allows policies that read ground-truth output lengths.
  bool hypothetical = false;
  OutputHistogram::Config histogram;

  // Throws ValidationError for inconsistent knobs or O-reading policies on a
  // deployable run.
  void validate() const;
  [[nodiscard]] bool reads_output_length() const;
};

// A running request with exactly one token left to process after producing
// at least one output token is a decode; everything else is a (re)fill.
bool is_decode(const Request& r);

// Request groups in priority order. PrefillFirst: [waiting + running
// prefills, running decodes]; DecodeFirst: [decodes, prefills, waiting];
// Rank*: one group sorted by I or O. Arrival then index breaks ties.
std::vector<std::vector<RequestIndex>> group_requests(const std::vector<RequestIndex>& waiting,
                                                      const std::vector<RequestIndex>& running,
                                                      const Workload& requests,
                                                      const SchedulerConfig& config);

enum class AllocDecision { Admit, RejectTokenLimit, RejectMemory };

const char* to_string(AllocDecision d);

// `holdings_without_cand` is the post-batch KV holding of everyone else,
// `cand_holding` the candidate's post-batch max(reserved, m + c).
AllocDecision can_allocate(Tokens c, Tokens batch_tokens, Tokens token_limit, Tokens holdings_without_cand,
                           Tokens cand_holding, Tokens kv_capacity);

// min(available, budget), or 0 when chunking is off and it does not fit.
Tokens chunk_prefill(Tokens available, Tokens budget, bool chunked_prefill);

// Ordering key of a victim candidate.
struct VictimInfo {
  RequestIndex request = 0;
  Tokens m = 0;
  Seconds arrival = 0.0;
  std::uint64_t admission = 0;
};

std::optional<RequestIndex> select_victim(ReplacementPolicy policy, const std::vector<VictimInfo>& pool);

// m := 0, reserved := 0, phase := Waiting; generated tokens are kept.
// Returns the number of KVs discarded.
Tokens preempt(Request& r);

struct BatchDecision {
  std::vector<BatchEntry> entries;
  std::vector<PreemptionEvent> preemptions;
};

// Algorithm-1 batch builder. Owns the waiting and running queues and the
// output-length histogram; request state lives in the caller's Workload.
class Scheduler {
 public:
  Scheduler(SchedulerConfig config, Tokens kv_capacity, Tokens context_size = 4096);

  [[nodiscard]] const SchedulerConfig& config() const { return config_; }
  [[nodiscard]] Tokens kv_capacity() const { return kv_capacity_; }

  // Checks that every request can eventually run under this configuration.
  void check_workload(const Workload& requests) const;

  void enqueue(RequestIndex i);
  BatchDecision next_batch(Workload& requests, std::size_t batch_index);
  // Releases a completed request and feeds the histogram.
  void complete(Workload& requests, RequestIndex i);

  [[nodiscard]] const std::vector<RequestIndex>& waiting() const { return waiting_; }
  [[nodiscard]] const std::vector<RequestIndex>& running() const { return running_; }
  [[nodiscard]] const OutputHistogram& histogram() const { return histogram_; }
  // Current KV holding sum_running max(reserved, m).
  [[nodiscard]] Tokens holdings(const Workload& requests) const;
  // Reservation taken when a waiting request is admitted.
  [[nodiscard]] Tokens admission_reservation(const Request& r) const;

 private:
  SchedulerConfig config_;
  Tokens kv_capacity_;
  Tokens context_size_;
  std::vector<RequestIndex> waiting_;
  std::vector<RequestIndex> running_;
  std::vector<std::uint64_t> admission_seq_;
  std::uint64_t next_admission_ = 0;
  OutputHistogram histogram_;
};

} // namespace infersched
