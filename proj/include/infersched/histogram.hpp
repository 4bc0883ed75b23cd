#pragma once

#include <cstddef>
#include <vector>

#include "infersched/core.hpp"

namespace infersched {

// Online output-length estimator keyed by input length. Buckets are
// [2^k, 2^(k+1)); each keeps its samples sorted, which is exact and cheap at
// simulation scale.
class OutputHistogram {
 public:
  struct Config {
    double quantile = 0.9;
    std::size_t min_observations = 8;
    Tokens prior = 256;
  };

  OutputHistogram() : OutputHistogram(Config{}) {}
  explicit OutputHistogram(Config config, Tokens context_size = 4096);

  void observe(Tokens input_len, Tokens output_len);

  // Bucket quantile, else global quantile, else the prior.
  [[nodiscard]] Tokens predict(Tokens input_len) const;

  [[nodiscard]] std::size_t bucket_of(Tokens input_len) const;
  [[nodiscard]] std::size_t bucket_count(std::size_t bucket) const { return buckets_.at(bucket).size(); }
  [[nodiscard]] std::size_t total_count() const { return all_.size(); }
  [[nodiscard]] const Config& config() const { return config_; }

 private:
  // Sample at index min(N - 1, floor(q * N)) of the sorted values.
  [[nodiscard]] Tokens quantile_of(const std::vector<Tokens>& sorted) const;

  Config config_;
  std::vector<std::vector<Tokens>> buckets_;
  std::vector<Tokens> all_;
};

// Predicted peak KV demand I + max(O_hat, generated + 1) - 1.
Tokens predicted_peak(const OutputHistogram& hist, const Request& r);

// True iff admitting `cand` would push the predicted peaks of running plus
// cand past M. Never defers when nothing is running.
bool should_defer(const OutputHistogram& hist, const Request& cand,
                  const std::vector<const Request*>& running, Tokens kv_capacity);

} // namespace infersched
