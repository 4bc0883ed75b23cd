#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "infersched/core.hpp"

namespace infersched {

// FLOPs and bytes moved by one operator invocation.
struct OpCost {
  double flops = 0.0;
  double rw = 0.0;

  OpCost& operator+=(const OpCost& other) {
    flops += other.flops;
    rw += other.rw;
    return *this;
  }
  friend OpCost operator+(OpCost a, const OpCost& b) { return a += b; }
};

// (c x in_dim) * (in_dim x out_dim). Weights are loaded even for c = 0.
OpCost matmul_cost(Tokens c, std::int64_t in_dim, std::int64_t out_dim,
                   std::int64_t bytes_per_element);

// FlashAttention-style cost for B requests that share (c, m). rw is in bytes.
// Throws ValidationError unless c >= 1, m >= 0, B >= 1.
OpCost attention_cost(Tokens c, Tokens m, std::int64_t batch_requests, const ModelSpec& model);

enum class Boundness { ComputeBound, MemoryBound };

const char* to_string(Boundness b);

// flops / rw. Throws ValidationError when rw == 0.
double intensity(const OpCost& cost);
Boundness classify(double intensity, const HardwareSpec& hw);

// max(flops / peak_flops, rw / mem_bandwidth)
Seconds theoretical_latency(const OpCost& cost, const HardwareSpec& hw);

enum class OpClass { NonAttention, PrefillAttention, DecodeAttention };

const char* to_string(OpClass op_class);

struct LayerOp {
  std::string name;
  OpClass op_class = OpClass::NonAttention;
  OpCost cost;
};

// Per-layer operators of a Llama-style decoder layer for the given batch
// composition. Attention of mixed (c, m) requests is summed per request.
std::vector<LayerOp> layer_operators(std::span<const BatchEntry> entries, const ModelSpec& model);

// Sum over operators of theoretical_latency, times num_layers. Empty batch -> 0.
Seconds theoretical_batch_time(std::span<const BatchEntry> entries, const ModelSpec& model,
                               const HardwareSpec& hw);

// Per-class theoretical time for the whole model (all layers).
Seconds theoretical_class_time(std::span<const BatchEntry> entries, OpClass op_class,
                               const ModelSpec& model, const HardwareSpec& hw);

enum class Feature : std::size_t {
  Bias = 0,
  SumC,
  SumC2Prefill,
  SumMCPrefill,
  SumMDecode,
  NPrefill,
  NDecode,
  // Context read by prefill attention; fitted in the prefill-attention class only.
  SumMPrefill,
};
inline constexpr std::size_t kNumFeatures = 8;

const char* feature_name(Feature f);
const char* feature_name(std::size_t index);

struct BatchFeatures {
  double bias = 1.0;
  double sum_c = 0.0;
  double sum_c2_prefill = 0.0;
  double sum_mc_prefill = 0.0;
  double sum_m_decode = 0.0;
  double n_prefill = 0.0;
  double n_decode = 0.0;
  double sum_m_prefill = 0.0;

  [[nodiscard]] std::array<double, kNumFeatures> as_array() const;
  static BatchFeatures from_array(const std::array<double, kNumFeatures>& values);
};

// Throws ValidationError on an empty batch.
BatchFeatures extract_features(std::span<const BatchEntry> entries);

struct ProfileSample {
  BatchFeatures features;
  Seconds observed_seconds = 0.0;
};

// Which features a fit may use. The bias is always fitted.
using FeatureMask = std::array<bool, kNumFeatures>;
inline constexpr FeatureMask kAllFeatures{true, true, true, true, true, true, true, true};

struct LinearCostModel {
  std::array<double, kNumFeatures> coefficients{};
  double r_squared = 0.0;

  [[nodiscard]] Seconds predict(const BatchFeatures& features) const;
  [[nodiscard]] double coefficient(Feature f) const {
    return coefficients[static_cast<std::size_t>(f)];
  }
  // Sum of two models; used to combine per-operator-class fits.
  friend LinearCostModel operator+(const LinearCostModel& a, const LinearCostModel& b);
};

// Non-negative least squares with an unconstrained bias. Throws
// ValidationError for fewer than two samples or a rank-deficient design.
LinearCostModel fit_linear(std::span<const ProfileSample> samples,
                           const FeatureMask& mask = kAllFeatures);

// Coefficient of determination of `model` on `samples`.
double r_squared(const LinearCostModel& model, std::span<const ProfileSample> samples);

struct TheoreticalCost {
  ModelSpec model;
  HardwareSpec hw;
};

struct CalibratedCost {
  std::shared_ptr<const LinearCostModel> model;
};

using CostMode = std::variant<TheoreticalCost, CalibratedCost>;

// Empty batch -> 0. Calibrated mode without a fitted model throws ValidationError.
Seconds predict_batch_time(std::span<const BatchEntry> entries, const CostMode& mode);

// Lower bound on the cost of any schedule that still has to run `batches`
// non-empty batches processing `tokens` tokens in total. Requires a
// monotone model.
struct CostFloor {
  Seconds per_batch = 0.0;
  Seconds per_token = 0.0;
};
CostFloor cost_floor(const CostMode& mode);

} // namespace infersched
