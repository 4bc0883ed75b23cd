#include "infersched/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace infersched {

namespace {

// Splits `total` into `parts` near-equal integers, largest first.
std::vector<Tokens> split_even(Tokens total, Tokens parts) {
  std::vector<Tokens> out;
  for (Tokens k = 0; k < parts; ++k) out.push_back(total / parts + (k < total % parts ? 1 : 0));
  return out;
}

} // namespace

HybridTimeFn hybrid_time_fn(const CostMode& mode, Tokens n_prefill, Tokens n_decode) {
  if (n_prefill < 0 || n_decode < 0) throw ValidationError("slo: request counts must be >= 0");
  return [mode, n_prefill, n_decode](Tokens c, Tokens m) {
    std::vector<BatchEntry> entries;
    RequestIndex next = 0;
    if (c > 0 && n_prefill > 0) {
      for (Tokens part : split_even(c, std::min(n_prefill, c))) {
        entries.push_back({next++, part, 0, Phase::Prefill, true});
      }
    }
    if (n_decode > 0) {
      for (Tokens part : split_even(m, n_decode)) entries.push_back({next++, 1, part, Phase::Decode, true});
    }
    return predict_batch_time(entries, mode);
  };
}

std::vector<Tokens> slo_default_grid(Tokens token_limit, std::size_t count) {
  if (token_limit < 1) throw ValidationError("slo: token limit must be >= 1");
  std::vector<Tokens> grid{0};
  const double hi = std::log(static_cast<double>(token_limit));
  for (std::size_t k = 0; k < count; ++k) {
    const double t = count == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    grid.push_back(std::clamp<Tokens>(std::llround(std::exp(t * hi)), 1, token_limit));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

SloCurve slo_pareto(Seconds tpot_threshold, const HybridTimeFn& time, const std::vector<Tokens>& c_grid,
                    Tokens m_limit) {
  if (!(tpot_threshold > 0)) throw ValidationError("slo: threshold must be > 0");
  if (c_grid.empty()) throw ValidationError("slo: empty c grid");
  // Guard against rounding in the model sum: the stub example lands exactly on the threshold.
  const Seconds limit = tpot_threshold * (1.0 + 1e-12);
  SloCurve curve;
  if (time(0, 0) > limit) {
    curve.status = "threshold below empty-load batch time";
    return curve;
  }
  std::vector<Tokens> grid = c_grid;
  std::sort(grid.begin(), grid.end());
  for (Tokens c : grid) {
    if (c < 0) throw ValidationError("slo: c grid values must be >= 0");
    if (time(c, 0) > limit) break;
    Tokens lo = 0; // feasible
    Tokens hi = 1; // probe upward for an infeasible bound
    while (hi <= m_limit && time(c, hi) <= limit) {
      lo = hi;
      hi *= 2;
    }
    hi = std::min(hi, m_limit + 1);
    while (hi - lo > 1) {
      const Tokens mid = lo + (hi - lo) / 2;
      if (time(c, mid) <= limit) lo = mid; else hi = mid;
    }
    curve.points.push_back({c, lo});
  }
  if (curve.points.size() < grid.size()) curve.status = "truncated: prefill alone exceeds threshold";
  return curve;
}

const char* to_string(BreakEvenStatus s) {
  switch (s) {
    case BreakEvenStatus::Crossover: return "crossover";
    case BreakEvenStatus::AlwaysSwap: return "always-swap";
    case BreakEvenStatus::AlwaysRecompute: return "always-recompute";
  }
  return "?";
}

RecomputeFn recompute_time_fn(const CostMode& mode) {
  return [mode](Tokens n) {
    const BatchEntry e{0, n, 0, Phase::Prefill, true};
    return predict_batch_time(std::span(&e, 1), mode);
  };
}

BreakEven swap_recompute_breakeven(const RecomputeFn& recompute, Seconds swap_seconds_per_token,
                                   Tokens max_tokens) {
  if (max_tokens < 1) throw ValidationError("breakeven: max tokens must be >= 1");
  for (Tokens n = 1; n <= max_tokens; ++n) {
    if (recompute(n) <= static_cast<double>(n) * swap_seconds_per_token) {
      return {n == 1 ? BreakEvenStatus::AlwaysRecompute : BreakEvenStatus::Crossover, n};
    }
  }
  return {BreakEvenStatus::AlwaysSwap, 0};
}

BreakEven swap_recompute_breakeven(const RecomputeFn& recompute, const ModelSpec& model,
                                   const HardwareSpec& hw) {
  if (!(hw.pcie_bandwidth > 0)) throw ValidationError("breakeven: pcie bandwidth must be > 0");
  return swap_recompute_breakeven(recompute, model.kv_bytes_per_token() / hw.pcie_bandwidth,
                                  model.context_size);
}

Seconds five_minute_interval(Tokens n, Seconds recompute_time_n, Tokens kv_capacity) {
  if (n < 1 || kv_capacity < 1) throw ValidationError("fiverule: N and M must be >= 1");
  return recompute_time_n / static_cast<double>(n) * static_cast<double>(kv_capacity);
}

Seconds five_minute_interval(Tokens n, const RecomputeFn& recompute, Tokens kv_capacity) {
  return five_minute_interval(n, recompute(n), kv_capacity);
}

RooflinePoint roofline_point(const std::string& op, Tokens c, Tokens m, std::int64_t batch_requests,
                             const ModelSpec& model, const HardwareSpec& hw) {
  model.validate();
  hw.validate();
  RooflinePoint p;
  p.op = op;
  const std::int64_t bpe = model.bytes_per_element;
  const std::int64_t h = model.hidden_dim;
  if (op == "prefill-attn") {
    p.cost = attention_cost(c, m, batch_requests, model);
  } else if (op == "decode-attn") {
    if (c != 1) throw ValidationError("roofline: decode attention requires c = 1");
    p.cost = attention_cost(1, m, batch_requests, model);
  } else if (op == "qkv-proj") {
    p.cost = matmul_cost(c, h, h + 2 * model.head_dim * model.num_kv_heads, bpe);
  } else if (op == "o-proj") {
    p.cost = matmul_cost(c, h, h, bpe);
  } else if (op == "gate-up-proj") {
    p.cost = matmul_cost(c, h, 2 * model.dense_dim, bpe);
  } else if (op == "down-proj") {
    p.cost = matmul_cost(c, model.dense_dim, h, bpe);
  } else {
    throw ValidationError("roofline: unknown operator '" + op + "'");
  }
  p.intensity = intensity(p.cost);
  p.element_intensity = p.intensity * static_cast<double>(bpe);
  p.boundness = classify(p.intensity, hw);
  p.latency = theoretical_latency(p.cost, hw);
  return p;
}

} // namespace infersched
