#include "infersched/profiler.hpp"

#include <cmath>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

#include "infersched/rng.hpp"

namespace infersched {

FeatureMask class_feature_mask(OpClass op_class) {
  FeatureMask mask{};
  mask[static_cast<std::size_t>(Feature::Bias)] = true;
  switch (op_class) {
    case OpClass::NonAttention:
      mask[static_cast<std::size_t>(Feature::SumC)] = true;
      break;
    case OpClass::PrefillAttention:
      mask[static_cast<std::size_t>(Feature::SumC)] = true;
      mask[static_cast<std::size_t>(Feature::SumC2Prefill)] = true;
      mask[static_cast<std::size_t>(Feature::SumMCPrefill)] = true;
      mask[static_cast<std::size_t>(Feature::NPrefill)] = true;
      mask[static_cast<std::size_t>(Feature::SumMPrefill)] = true;
      break;
    case OpClass::DecodeAttention:
      mask[static_cast<std::size_t>(Feature::SumMDecode)] = true;
      mask[static_cast<std::size_t>(Feature::NDecode)] = true;
      break;
  }
  return mask;
}

Seconds synthetic_class_time(std::span<const BatchEntry> entries, OpClass op_class,
                             const ModelSpec& model, const HardwareSpec& hw,
                             const ProfilerConfig& config, double noise_factor) {
  const double factor = op_class == OpClass::NonAttention ? config.matmul_inefficiency
                                                          : config.attention_inefficiency;
  return theoretical_class_time(entries, op_class, model, hw) * factor * noise_factor;
}

namespace {

Tokens log_uniform(Rng& rng, Tokens lo, Tokens hi) {
  const double x = std::exp(rng.uniform(std::log(static_cast<double>(lo)),
                                        std::log(static_cast<double>(hi) + 1.0)));
  return std::clamp(static_cast<Tokens>(x), lo, hi);
}

std::vector<BatchEntry> random_prefill_batch(Rng& rng, const ModelSpec& model,
                                             const ProfilerConfig& config) {
  std::vector<BatchEntry> entries;
  const Tokens n = rng.uniform_int(1, config.max_prefill_requests);
  Tokens budget = model.context_size;
  for (Tokens k = 0; k < n && budget > 0; ++k) {
    const Tokens c = log_uniform(rng, 1, budget);
    const Tokens m = rng.uniform_int(0, model.context_size - c);
    entries.push_back({static_cast<RequestIndex>(k), c, m, Phase::Prefill, true});
    budget -= c;
  }
  return entries;
}

std::vector<BatchEntry> random_decode_batch(Rng& rng, const ModelSpec& model,
                                            const ProfilerConfig& config) {
  std::vector<BatchEntry> entries;
  const Tokens n = log_uniform(rng, 1, config.max_decode_requests);
  for (Tokens k = 0; k < n; ++k) {
    const Tokens m = rng.uniform_int(1, model.context_size - 1);
    entries.push_back({static_cast<RequestIndex>(k), 1, m, Phase::Decode, true});
  }
  return entries;
}

double noise(Rng& rng, const ProfilerConfig& config) {
  return std::max(0.5, 1.0 + config.noise_sigma * rng.normal());
}

} // namespace

std::vector<ClassProfile> synthesize_profiles(const ModelSpec& model, const HardwareSpec& hw,
                                              const ProfilerConfig& config) {
  model.validate();
  hw.validate();
  Rng rng(config.seed);
  std::vector<ClassProfile> out;
  for (OpClass cls : {OpClass::NonAttention, OpClass::PrefillAttention, OpClass::DecodeAttention}) {
    ClassProfile profile;
    profile.op_class = cls;
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      std::vector<BatchEntry> entries;
      if (cls == OpClass::DecodeAttention) {
        entries = random_decode_batch(rng, model, config);
      } else if (cls == OpClass::PrefillAttention) {
        entries = random_prefill_batch(rng, model, config);
      } else {
        // Non-attention cost only depends on the total token count.
        const Tokens c = log_uniform(rng, 1, model.context_size);
        entries.push_back({0, c, 0, Phase::Prefill, true});
      }
      const double t = synthetic_class_time(entries, cls, model, hw, config, noise(rng, config));
      profile.samples.push_back({extract_features(entries), t});
    }
    out.push_back(std::move(profile));
  }
  return out;
}

std::vector<ProfileSample> synthesize_batch_profile(const ModelSpec& model, const HardwareSpec& hw,
                                                    const ProfilerConfig& config,
                                                    std::size_t count) {
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<ProfileSample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<BatchEntry> entries;
    const auto kind = rng.uniform_int(0, 2);
    if (kind != 1) entries = random_prefill_batch(rng, model, config);
    if (kind != 0) {
      auto decodes = random_decode_batch(rng, model, config);
      entries.insert(entries.end(), decodes.begin(), decodes.end());
    }
    double t = 0.0;
    for (OpClass cls : {OpClass::NonAttention, OpClass::PrefillAttention, OpClass::DecodeAttention}) {
      t += synthetic_class_time(entries, cls, model, hw, config, noise(rng, config));
    }
    samples.push_back({extract_features(entries), t});
  }
  return samples;
}

Calibration calibrate(const std::vector<ClassProfile>& profiles) {
  if (profiles.empty()) throw ValidationError("calibrate: no profiles given");
  Calibration cal;
  for (const ClassProfile& p : profiles) {
    LinearCostModel fitted = fit_linear(p.samples, class_feature_mask(p.op_class));
    cal.class_models.push_back(fitted);
    cal.classes.push_back(p.op_class);
    cal.combined = cal.class_models.size() == 1 ? fitted : cal.combined + fitted;
  }
  return cal;
}

Calibration default_calibration(const ModelSpec& model, const HardwareSpec& hw,
                                const ProfilerConfig& config) {
  return calibrate(synthesize_profiles(model, hw, config));
}

std::shared_ptr<const LinearCostModel> default_calibrated_model() {
  static std::once_flag once;
  static std::shared_ptr<const LinearCostModel> cached;
  std::call_once(once, [] {
    cached = std::make_shared<const LinearCostModel>(default_calibration().combined);
  });
  return cached;
}

namespace {
constexpr const char* kProfileHeader =
    "sum_c,sum_c2_prefill,sum_mc_prefill,sum_m_decode,n_prefill,n_decode,seconds";
}

// The trailing sum_m_prefill column is optional on read; older files omit it.
void write_profile_csv(std::ostream& out, const std::vector<ProfileSample>& samples) {
  out << kProfileHeader << ",sum_m_prefill\n";
  const auto old_precision = out.precision(17);
  for (const auto& s : samples) {
    const auto& f = s.features;
    out << f.sum_c << ',' << f.sum_c2_prefill << ',' << f.sum_mc_prefill << ',' << f.sum_m_decode
        << ',' << f.n_prefill << ',' << f.n_decode << ',' << s.observed_seconds << ','
        << f.sum_m_prefill << '\n';
  }
  out.precision(old_precision);
}

std::vector<ProfileSample> read_profile_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source_name + ": empty profile file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t columns = 0;
  if (line == kProfileHeader) {
    columns = 7;
  } else if (line == std::string(kProfileHeader) + ",sum_m_prefill") {
    columns = 8;
  } else {
    throw ValidationError(source_name + ":1: unexpected header '" + line + "'");
  }
  std::vector<ProfileSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 8> v{};
    std::istringstream row(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(row, cell, ',')) {
      if (k >= columns) break;
      try {
        std::size_t used = 0;
        v[k] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ValidationError(source_name + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      ++k;
    }
    if (k != columns || row.rdbuf()->in_avail() > 0) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(columns) + " columns");
    }
    ProfileSample s;
    s.features = BatchFeatures::from_array({1.0, v[0], v[1], v[2], v[3], v[4], v[5], v[7]});
    s.observed_seconds = v[6];
    samples.push_back(s);
  }
  return samples;
}

} // namespace infersched
