#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "infersched/costmodel.hpp"

namespace infersched {

// Stand-in for GPU profiling: roofline time inflated by a per-class
// inefficiency factor and multiplicative Gaussian noise.
struct ProfilerConfig {
  double attention_inefficiency = 3.0;
  double matmul_inefficiency = 1.25;
  double noise_sigma = 0.02;
  std::uint64_t seed = 42;
  std::size_t samples_per_class = 400;
  Tokens max_prefill_requests = 4;
  Tokens max_decode_requests = 256;
};

struct ClassProfile {
  OpClass op_class = OpClass::NonAttention;
  std::vector<ProfileSample> samples;
};

// Features each class model may use. Decode-only samples have sum_c equal to
// n_decode, so the decode class cannot see sum_c.
FeatureMask class_feature_mask(OpClass op_class);

// Synthetic measured time of one class of operators for a batch.
Seconds synthetic_class_time(std::span<const BatchEntry> entries, OpClass op_class,
                             const ModelSpec& model, const HardwareSpec& hw,
                             const ProfilerConfig& config, double noise_factor);

// One profile per operator class, each over batches that exercise that class.
std::vector<ClassProfile> synthesize_profiles(const ModelSpec& model, const HardwareSpec& hw,
                                              const ProfilerConfig& config);

// End-to-end batch times for random hybrid batches; used as held-out data.
std::vector<ProfileSample> synthesize_batch_profile(const ModelSpec& model, const HardwareSpec& hw,
                                                    const ProfilerConfig& config,
                                                    std::size_t count);

struct Calibration {
  std::vector<LinearCostModel> class_models; // same order as the profiles
  std::vector<OpClass> classes;
  LinearCostModel combined;
};

// Fits each class with its feature mask and sums the class models.
Calibration calibrate(const std::vector<ClassProfile>& profiles);

// Profiles then calibrates with the given settings.
Calibration default_calibration(const ModelSpec& model = {}, const HardwareSpec& hw = {},
                                const ProfilerConfig& config = {});

// Cached default calibration for the stock model and hardware.
std::shared_ptr<const LinearCostModel> default_calibrated_model();

void write_profile_csv(std::ostream& out, const std::vector<ProfileSample>& samples);
std::vector<ProfileSample> read_profile_csv(std::istream& in, const std::string& source_name);

} // namespace infersched
