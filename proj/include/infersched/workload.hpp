#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "infersched/core.hpp"

namespace infersched {

enum class ArrivalKind { AllAtZero, EvenlySpaced, UniformRandom, FromTrace };

const char* to_string(ArrivalKind k);
ArrivalKind parse_arrival_kind(const std::string& s);

struct ArrivalMode {
  ArrivalKind kind = ArrivalKind::AllAtZero;
  Seconds horizon = 100.0; // T for EvenlySpaced / UniformRandom
  std::uint64_t seed = 0;
};

// Rewrites arrival times in place. Evenly spaced covers [0, T] end to end.
// FromTrace leaves the times untouched.
void apply_arrivals(Workload& workload, const ArrivalMode& mode);

Workload gen_fixed(Tokens input_len, Tokens output_len, std::size_t count,
                   const ArrivalMode& arrival = {}, Tokens context_size = 4096);

enum class HeteroGroup { SISO, SILO, LISO, LILO };

const char* to_string(HeteroGroup g);
HeteroGroup parse_hetero_group(const std::string& s);

// W/2 requests per group with I and O drawn independently from the group's
// length sets, then shuffled. Exactly two distinct groups and an even W.
Workload gen_hetero(const std::vector<HeteroGroup>& groups, std::size_t count, std::uint64_t seed,
                    const ArrivalMode& arrival = {}, Tokens context_size = 4096);

// CSV with header request_id,arrival_s,input_tokens,output_tokens. Rows are
// sorted by arrival (stable). Errors name the source and line.
Workload parse_trace(std::istream& in, const std::string& source_name);
Workload load_trace(const std::string& path);

struct ScaleResult {
  Workload workload;
  std::size_t clamped = 0;
};

// O := ceil(O * o_scale), clamped to S - I + 1.
ScaleResult scale(const Workload& workload, double o_scale, Tokens context_size = 4096);

enum class WorkloadKind { FixedGrid, HeteroMix, Trace };

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::FixedGrid;
  Tokens input_len = 1;
  Tokens output_len = 1;
  std::size_t count = 1;
  std::vector<HeteroGroup> groups;
  std::uint64_t seed = 0;
  std::string trace_path;
  ArrivalMode arrival;
  double o_scale = 1.0;
  double m_scale = 1.0;
};

// `fixed:I=512,O=32,W=1024`, `hetero:groups=LILO+SILO,W=4,seed=1`,
// `trace:path=x.csv`. Common keys: arrival=zero|even|uniform|trace, T, seed,
// o_scale, m_scale.
WorkloadSpec parse_workload_spec(const std::string& text);
std::string format_workload_spec(const WorkloadSpec& spec);

struct BuiltWorkload {
  Workload workload;
  std::size_t clamped = 0;
};

BuiltWorkload build_workload(const WorkloadSpec& spec, Tokens context_size = 4096);

} // namespace infersched
