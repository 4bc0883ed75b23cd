#include "infersched/histogram.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace infersched {

OutputHistogram::OutputHistogram(Config config, Tokens context_size) : config_(config) {
  if (!(config_.quantile > 0.0 && config_.quantile <= 1.0)) {
    throw ValidationError("histogram: quantile must be in (0, 1]");
  }
  if (config_.prior < 1) throw ValidationError("histogram: prior must be >= 1");
  if (context_size < 1) throw ValidationError("histogram: context size must be >= 1");
  buckets_.resize(static_cast<std::size_t>(std::bit_width(static_cast<std::uint64_t>(context_size))));
}

std::size_t OutputHistogram::bucket_of(Tokens input_len) const {
  const auto v = static_cast<std::uint64_t>(std::max<Tokens>(input_len, 1));
  return std::min<std::size_t>(static_cast<std::size_t>(std::bit_width(v)) - 1, buckets_.size() - 1);
}

void OutputHistogram::observe(Tokens input_len, Tokens output_len) {
  auto& b = buckets_[bucket_of(input_len)];
  b.insert(std::upper_bound(b.begin(), b.end(), output_len), output_len);
  all_.insert(std::upper_bound(all_.begin(), all_.end(), output_len), output_len);
}

Tokens OutputHistogram::quantile_of(const std::vector<Tokens>& sorted) const {
  const auto n = sorted.size();
  const auto idx = std::min(n - 1, static_cast<std::size_t>(std::floor(config_.quantile * static_cast<double>(n))));
  return sorted[idx];
}

Tokens OutputHistogram::predict(Tokens input_len) const {
  const auto& b = buckets_[bucket_of(input_len)];
  if (b.size() >= config_.min_observations) return quantile_of(b);
  if (all_.size() >= config_.min_observations) return quantile_of(all_);
  return config_.prior;
}

Tokens predicted_peak(const OutputHistogram& hist, const Request& r) {
  return r.input_len + std::max(hist.predict(r.input_len), r.generated + 1) - 1;
}

bool should_defer(const OutputHistogram& hist, const Request& cand,
                  const std::vector<const Request*>& running, Tokens kv_capacity) {
  if (running.empty()) return false;
  Tokens demand = predicted_peak(hist, cand);
  for (const Request* r : running) demand += predicted_peak(hist, *r);
  return demand > kv_capacity;
}

} // namespace infersched
