#include "infersched/core.hpp"

#include <numeric>
#include <sstream>

namespace infersched {

void ModelSpec::validate() const {
  if (hidden_dim <= 0 || dense_dim <= 0 || head_dim <= 0 || num_query_heads <= 0 ||
      num_kv_heads <= 0 || num_layers <= 0 || context_size <= 0 || bytes_per_element <= 0) {
    throw ValidationError("model spec: all dimensions must be positive");
  }
  if (hidden_dim != head_dim * num_query_heads) {
    throw ValidationError("model spec: hidden_dim must equal head_dim * num_query_heads");
  }
  if (num_kv_heads > num_query_heads || num_query_heads % num_kv_heads != 0) {
    throw ValidationError("model spec: num_kv_heads must divide num_query_heads");
  }
}

double ModelSpec::kv_bytes_per_token() const {
  return 2.0 * static_cast<double>(num_layers) * static_cast<double>(num_kv_heads) *
         static_cast<double>(head_dim) * static_cast<double>(bytes_per_element);
}

void HardwareSpec::validate() const {
  if (!(peak_flops > 0) || !(mem_bandwidth > 0) || !(pcie_bandwidth > 0) ||
      kv_cache_capacity <= 0) {
    throw ValidationError("hardware spec '" + name + "': all fields must be strictly positive");
  }
}

HardwareSpec hardware_preset(const std::string& name) {
  HardwareSpec hw;
  hw.name = name;
  if (name == "a100") return hw;
  if (name == "h100") {
    hw.peak_flops = 989e12;
    hw.mem_bandwidth = 3.35e12;
    hw.pcie_bandwidth = 64e9;
    return hw;
  }
  throw ValidationError("unknown hardware preset '" + name + "' (expected a100 or h100)");
}

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::Waiting: return "waiting";
    case Phase::Prefill: return "prefill";
    case Phase::Decode: return "decode";
    case Phase::Completed: return "completed";
  }
  return "?";
}

Request Request::pristine() const {
  Request r;
  r.id = id;
  r.arrival_time = arrival_time;
  r.input_len = input_len;
  r.output_len = output_len;
  return r;
}

Tokens sequence_length(const Request& r) { return r.input_len + r.generated; }

Tokens tokens_available(const Request& r) {
  if (r.phase == Phase::Completed) {
    throw ValidationError("tokens_available: request '" + r.id + "' is already completed");
  }
  return sequence_length(r) - r.m;
}

Tokens peak_kv_demand(const Request& r) { return r.input_len + r.output_len - 1; }

void validate_workload(const Workload& workload, Tokens context_size) {
  if (workload.empty()) throw ValidationError("workload is empty");
  for (std::size_t i = 0; i < workload.size(); ++i) {
    const Request& r = workload[i];
    std::ostringstream where;
    where << "request #" << i << " ('" << r.id << "')";
    if (r.input_len < 1 || r.output_len < 1) {
      throw ValidationError(where.str() + ": input and output lengths must be >= 1");
    }
    if (!(r.arrival_time >= 0.0)) {
      throw ValidationError(where.str() + ": arrival time must be >= 0");
    }
    if (peak_kv_demand(r) > context_size) {
      std::ostringstream msg;
      msg << where.str() << ": I + O - 1 = " << peak_kv_demand(r) << " exceeds context size "
          << context_size;
      throw ValidationError(msg.str());
    }
  }
}

Tokens Batch::total_tokens() const {
  return std::accumulate(entries.begin(), entries.end(), Tokens{0},
                         [](Tokens acc, const BatchEntry& e) { return acc + e.c; });
}

} // namespace infersched
