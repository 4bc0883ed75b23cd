#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace infersched {

using Tokens = std::int64_t;
using Seconds = double;
using RequestIndex = std::uint32_t;

// Bad input or a violated precondition. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while running an otherwise valid experiment (I/O, solver limits).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSpec {
  std::int64_t hidden_dim = 4096;    // h
  std::int64_t dense_dim = 11008;    // f
  std::int64_t head_dim = 128;       // H
  std::int64_t num_query_heads = 32; // N_Q
  std::int64_t num_kv_heads = 32;    // N_KV
  std::int64_t num_layers = 32;
  Tokens context_size = 4096;        // S
  std::int64_t bytes_per_element = 2;

  // Throws ValidationError when h != H * N_Q or the GQA grouping is invalid.
  void validate() const;

  // Keys and values of one token across all layers.
  [[nodiscard]] double kv_bytes_per_token() const;
};

struct HardwareSpec {
  std::string name = "a100";
  double peak_flops = 312e12;      // FLOPs/s
  double mem_bandwidth = 2.039e12; // bytes/s
  double pcie_bandwidth = 32e9;    // bytes/s
  Tokens kv_cache_capacity = 100000;

  void validate() const;
  [[nodiscard]] double ridge_point() const { return peak_flops / mem_bandwidth; }
};

// Datasheet numbers for `a100` (SXM 80GB, PCIe 4) and `h100` (SXM, PCIe 5).
// Throws ValidationError for unknown names.
HardwareSpec hardware_preset(const std::string& name);

enum class Phase { Waiting, Prefill, Decode, Completed };

const char* to_string(Phase phase);

struct Request {
  std::string id;
  Seconds arrival_time = 0.0;
  Tokens input_len = 1;
  // Ground truth. Only the completion check, hypothetical policies and the
  // CSP read it.
  Tokens output_len = 1;

  Tokens m = 0;
  Tokens generated = 0;
  Phase phase = Phase::Waiting;
  int preempt_count = 0;
  std::optional<Seconds> first_token_time;
  std::optional<Seconds> completion_time;
  Tokens reserved = 0;

  // Fresh copy of the static part (id, arrival, I, O) with execution state reset.
  [[nodiscard]] Request pristine() const;
};

using Workload = std::vector<Request>;

// I + generated.
Tokens sequence_length(const Request& r);
// Largest c the request can process next; throws for completed requests.
Tokens tokens_available(const Request& r);
// I + O - 1; the O-th token's KV is never stored.
Tokens peak_kv_demand(const Request& r);

// Throws ValidationError if a request is malformed or longer than the context.
void validate_workload(const Workload& workload, Tokens context_size);

struct BatchEntry {
  RequestIndex request = 0;
  Tokens c = 0;
  Tokens m_before = 0;
  Phase phase_at_batch = Phase::Prefill;
  bool generated_token = false;
};

struct Batch {
  std::size_t index = 0;
  std::vector<BatchEntry> entries;
  Seconds start_time = 0.0;
  Seconds duration = 0.0;

  [[nodiscard]] Tokens total_tokens() const;
  [[nodiscard]] bool empty() const { return entries.empty(); }
};

struct PreemptionEvent {
  std::size_t batch_index = 0;
  RequestIndex request = 0;
  Tokens m_discarded = 0;
};

struct ScheduleLog {
  std::vector<Batch> batches;
  std::vector<PreemptionEvent> preemption_events;
  std::vector<RequestIndex> completion_order;
};

} // namespace infersched
