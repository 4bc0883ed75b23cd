#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "infersched/costmodel.hpp"

namespace infersched {

// Time of a hybrid batch holding `c` prefill tokens and `m` cached decode KVs.
using HybridTimeFn = std::function<Seconds(Tokens c, Tokens m)>;

// Splits c evenly over n_prefill fresh prefills and m evenly over n_decode
// decodes, then prices the batch with `mode`. c = 0 drops the prefills.
HybridTimeFn hybrid_time_fn(const CostMode& mode, Tokens n_prefill, Tokens n_decode);

struct SloPoint {
  Tokens c = 0;
  Tokens m = 0;
};

struct SloCurve {
  std::vector<SloPoint> points;
  std::string status = "ok";
};

// {0} plus `count` log-spaced integers in [1, C], deduplicated.
std::vector<Tokens> slo_default_grid(Tokens token_limit, std::size_t count = 64);

// For each c in the grid, the largest m with time(c, m) <= threshold. Grid
// points where even m = 0 misses the threshold are dropped.
SloCurve slo_pareto(Seconds tpot_threshold, const HybridTimeFn& time, const std::vector<Tokens>& c_grid,
                    Tokens m_limit = Tokens{1} << 40);

enum class BreakEvenStatus { Crossover, AlwaysSwap, AlwaysRecompute };

const char* to_string(BreakEvenStatus s);

struct BreakEven {
  BreakEvenStatus status = BreakEvenStatus::AlwaysSwap;
  Tokens n = 0; // smallest N with recompute <= swap; 0 for AlwaysSwap
};

using RecomputeFn = std::function<Seconds(Tokens n)>;

// Prefill of n fresh tokens as a single request, weight loading included.
RecomputeFn recompute_time_fn(const CostMode& mode);

// Scans N = 1..max_tokens for the first N where recompute(N) <= N * swap_per_token.
BreakEven swap_recompute_breakeven(const RecomputeFn& recompute, Seconds swap_seconds_per_token,
                                   Tokens max_tokens);
BreakEven swap_recompute_breakeven(const RecomputeFn& recompute, const ModelSpec& model,
                                   const HardwareSpec& hw);

// (recompute_time(N) / N) * M.
Seconds five_minute_interval(Tokens n, Seconds recompute_time_n, Tokens kv_capacity);
Seconds five_minute_interval(Tokens n, const RecomputeFn& recompute, Tokens kv_capacity);

struct RooflinePoint {
  std::string op;
  OpCost cost;
  double intensity = 0.0;         // FLOPs per byte
  double element_intensity = 0.0; // FLOPs per element moved
  Boundness boundness = Boundness::MemoryBound;
  Seconds latency = 0.0;
};

// op: prefill-attn, decode-attn, qkv-proj, o-proj, gate-up-proj, down-proj.
// Attention ops use (c, m, B); matmuls use c tokens.
RooflinePoint roofline_point(const std::string& op, Tokens c, Tokens m, std::int64_t batch_requests,
                             const ModelSpec& model, const HardwareSpec& hw);

} // namespace infersched
