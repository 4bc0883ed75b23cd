#include "infersched/costmodel.hpp"

#include <algorithm>
#include <cmath>

#include "infersched/nnls.hpp"

namespace infersched {

OpCost matmul_cost(Tokens c, std::int64_t in_dim, std::int64_t out_dim,
                   std::int64_t bytes_per_element) {
  const double cc = static_cast<double>(c);
  const double in = static_cast<double>(in_dim);
  const double out = static_cast<double>(out_dim);
  OpCost cost;
  cost.flops = 2.0 * cc * in * out;
  cost.rw = static_cast<double>(bytes_per_element) * (in * out + cc * in + cc * out);
  return cost;
}

OpCost attention_cost(Tokens c, Tokens m, std::int64_t batch_requests, const ModelSpec& model) {
  if (c < 1) throw ValidationError("attention_cost: c must be >= 1");
  if (m < 0) throw ValidationError("attention_cost: m must be >= 0");
  if (batch_requests < 1) throw ValidationError("attention_cost: B must be >= 1");
  const double cc = static_cast<double>(c);
  const double ctx = static_cast<double>(c + m);
  const double b = static_cast<double>(batch_requests);
  const double head = static_cast<double>(model.head_dim);
  const double nq = static_cast<double>(model.num_query_heads);
  const double nkv = static_cast<double>(model.num_kv_heads);
  const double tiles = static_cast<double>((c + model.head_dim - 1) / model.head_dim);

  OpCost cost;
  cost.flops = 4.0 * cc * ctx * b * head * nq;
  const double elements = 2.0 * cc * head * nq + 2.0 * cc * ctx * b * nq + 2.0 * tiles * ctx * b * head * nkv;
  cost.rw = elements * static_cast<double>(model.bytes_per_element);
  return cost;
}

const char* to_string(Boundness b) {
  return b == Boundness::ComputeBound ? "ComputeBound" : "MemoryBound";
}

double intensity(const OpCost& cost) {
  if (!(cost.rw > 0.0)) throw ValidationError("intensity: undefined for an operator with rw = 0");
  return cost.flops / cost.rw;
}

Boundness classify(double op_intensity, const HardwareSpec& hw) {
  return op_intensity >= hw.ridge_point() ? Boundness::ComputeBound : Boundness::MemoryBound;
}

Seconds theoretical_latency(const OpCost& cost, const HardwareSpec& hw) {
  return std::max(cost.flops / hw.peak_flops, cost.rw / hw.mem_bandwidth);
}

const char* to_string(OpClass op_class) {
  switch (op_class) {
    case OpClass::NonAttention: return "non_attention";
    case OpClass::PrefillAttention: return "prefill_attention";
    case OpClass::DecodeAttention: return "decode_attention";
  }
  return "?";
}

std::vector<LayerOp> layer_operators(std::span<const BatchEntry> entries, const ModelSpec& model) {
  std::vector<LayerOp> ops;
  if (entries.empty()) return ops;

  Tokens total_c = 0;
  OpCost prefill_attn;
  OpCost decode_attn;
  bool has_prefill = false;
  bool has_decode = false;
  for (const BatchEntry& e : entries) {
    total_c += e.c;
    if (e.phase_at_batch == Phase::Decode) {
      decode_attn += attention_cost(1, e.m_before, 1, model);
      has_decode = true;
    } else {
      prefill_attn += attention_cost(e.c, e.m_before, 1, model);
      has_prefill = true;
    }
  }

  const std::int64_t h = model.hidden_dim;
  const std::int64_t f = model.dense_dim;
  const std::int64_t kv_dim = model.head_dim * model.num_kv_heads;
  const std::int64_t bpe = model.bytes_per_element;

  ops.push_back({"qkv_proj", OpClass::NonAttention, matmul_cost(total_c, h, h + 2 * kv_dim, bpe)});
  if (has_prefill) ops.push_back({"prefill_attention", OpClass::PrefillAttention, prefill_attn});
  if (has_decode) ops.push_back({"decode_attention", OpClass::DecodeAttention, decode_attn});
  ops.push_back({"o_proj", OpClass::NonAttention, matmul_cost(total_c, h, h, bpe)});
  ops.push_back({"gate_up_proj", OpClass::NonAttention, matmul_cost(total_c, h, 2 * f, bpe)});
  ops.push_back({"down_proj", OpClass::NonAttention, matmul_cost(total_c, f, h, bpe)});

  // Two RMSNorms, two residual adds and the SiLU-gate product.
  const double cc = static_cast<double>(total_c);
  const double hd = static_cast<double>(h);
  const double fd = static_cast<double>(f);
  OpCost others;
  others.flops = cc * (10.0 * hd + 4.0 * fd);
  others.rw = cc * (10.0 * hd + 3.0 * fd) * static_cast<double>(bpe);
  ops.push_back({"others", OpClass::NonAttention, others});
  return ops;
}

Seconds theoretical_batch_time(std::span<const BatchEntry> entries, const ModelSpec& model,
                               const HardwareSpec& hw) {
  Seconds per_layer = 0.0;
  for (const LayerOp& op : layer_operators(entries, model)) per_layer += theoretical_latency(op.cost, hw);
  return per_layer * static_cast<double>(model.num_layers);
}

Seconds theoretical_class_time(std::span<const BatchEntry> entries, OpClass op_class,
                               const ModelSpec& model, const HardwareSpec& hw) {
  Seconds per_layer = 0.0;
  for (const LayerOp& op : layer_operators(entries, model)) {
    if (op.op_class == op_class) per_layer += theoretical_latency(op.cost, hw);
  }
  return per_layer * static_cast<double>(model.num_layers);
}

namespace {
constexpr std::array<const char*, kNumFeatures> kFeatureNames{
    "bias", "sum_c", "sum_c2_prefill", "sum_mc_prefill", "sum_m_decode", "n_prefill", "n_decode",
    "sum_m_prefill"};
}

const char* feature_name(Feature f) { return kFeatureNames[static_cast<std::size_t>(f)]; }
const char* feature_name(std::size_t index) { return kFeatureNames.at(index); }

std::array<double, kNumFeatures> BatchFeatures::as_array() const {
  return {bias, sum_c, sum_c2_prefill, sum_mc_prefill, sum_m_decode, n_prefill, n_decode, sum_m_prefill};
}

BatchFeatures BatchFeatures::from_array(const std::array<double, kNumFeatures>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

BatchFeatures extract_features(std::span<const BatchEntry> entries) {
  if (entries.empty()) throw ValidationError("extract_features: batch is empty");
  BatchFeatures f;
  for (const BatchEntry& e : entries) {
    const double c = static_cast<double>(e.c);
    const double m = static_cast<double>(e.m_before);
    f.sum_c += c;
    if (e.phase_at_batch == Phase::Decode) {
      f.sum_m_decode += m;
      f.n_decode += 1.0;
    } else {
      f.sum_c2_prefill += c * c;
      f.sum_mc_prefill += m * c;
      f.sum_m_prefill += m;
      f.n_prefill += 1.0;
    }
  }
  return f;
}

Seconds LinearCostModel::predict(const BatchFeatures& features) const {
  const auto x = features.as_array();
  Seconds t = 0.0;
  for (std::size_t k = 0; k < kNumFeatures; ++k) t += coefficients[k] * x[k];
  return t;
}

LinearCostModel operator+(const LinearCostModel& a, const LinearCostModel& b) {
  LinearCostModel sum;
  for (std::size_t k = 0; k < kNumFeatures; ++k) sum.coefficients[k] = a.coefficients[k] + b.coefficients[k];
  sum.r_squared = std::min(a.r_squared, b.r_squared);
  return sum;
}

double r_squared(const LinearCostModel& model, std::span<const ProfileSample> samples) {
  if (samples.empty()) return 0.0;
  double mean = 0.0;
  for (const auto& s : samples) mean += s.observed_seconds;
  mean /= static_cast<double>(samples.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (const auto& s : samples) {
    const double r = s.observed_seconds - model.predict(s.features);
    const double d = s.observed_seconds - mean;
    ss_res += r * r;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

LinearCostModel fit_linear(std::span<const ProfileSample> samples, const FeatureMask& mask) {
  if (samples.size() < 2) {
    throw ValidationError("fit_linear: need at least 2 profile samples, got " +
                          std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (!(s.observed_seconds > 0.0)) throw ValidationError("fit_linear: observed_seconds must be > 0");
  }

  const auto n = static_cast<Eigen::Index>(samples.size());
  std::vector<std::size_t> columns;
  for (std::size_t k = 1; k < kNumFeatures; ++k) {
    if (!mask[k]) continue;
    const double first = samples.front().features.as_array()[k];
    const bool varies = std::any_of(samples.begin(), samples.end(), [&](const ProfileSample& s) {
      return s.features.as_array()[k] != first;
    });
    if (varies) columns.push_back(k);
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = samples[static_cast<std::size_t>(i)].observed_seconds;
  const double y_mean = y.mean();

  LinearCostModel model;
  if (!columns.empty()) {
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = samples[static_cast<std::size_t>(i)].features.as_array();
      for (std::size_t j = 0; j < columns.size(); ++j) x(i, static_cast<Eigen::Index>(j)) = row[columns[j]];
    }
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    Eigen::MatrixXd xc = x.rowwise() - x_mean;

    // Centered, unit-norm columns for the rank test (c^2 features reach 1e7
    // while counts stay small). The solver gets its own scaling below.
    Eigen::VectorXd scale(xc.cols());
    for (Eigen::Index j = 0; j < xc.cols(); ++j) {
      scale(j) = xc.col(j).norm();
      xc.col(j) /= scale(j);
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(xc);
    lu.setThreshold(1e-10);
    if (lu.rank() < xc.cols()) {
      const Eigen::MatrixXd kernel = lu.kernel();
      std::string names;
      for (Eigen::Index j = 0; j < xc.cols(); ++j) {
        if (kernel.row(j).cwiseAbs().maxCoeff() <= 1e-8) continue;
        if (!names.empty()) names += ", ";
        names += feature_name(columns[static_cast<std::size_t>(j)]);
      }
      throw ValidationError("fit_linear: rank-deficient design matrix; collinear features: " + names);
    }

    // The intercept is a column like any other, so it is bounded at zero too.
    const auto k = static_cast<Eigen::Index>(columns.size());
    Eigen::MatrixXd xa(n, k + 1);
    xa.col(0).setOnes();
    xa.rightCols(k) = x;
    Eigen::VectorXd ascale(k + 1);
    for (Eigen::Index j = 0; j <= k; ++j) {
      ascale(j) = xa.col(j).norm();
      xa.col(j) /= ascale(j);
    }
    const Eigen::VectorXd w_scaled = nnls(xa, y);
    model.coefficients[0] = w_scaled(0) / ascale(0);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j) + 1;
      model.coefficients[columns[j]] = w_scaled(jj) / ascale(jj);
    }
  } else {
    model.coefficients[0] = y_mean;
  }

  model.r_squared = r_squared(model, samples);
  return model;
}

Seconds predict_batch_time(std::span<const BatchEntry> entries, const CostMode& mode) {
  if (const auto* calibrated = std::get_if<CalibratedCost>(&mode)) {
    if (!calibrated->model) throw ValidationError("calibrated cost mode requires a fitted model");
    if (entries.empty()) return 0.0;
    return calibrated->model->predict(extract_features(entries));
  }
  const auto& theo = std::get<TheoreticalCost>(mode);
  return theoretical_batch_time(entries, theo.model, theo.hw);
}

CostFloor cost_floor(const CostMode& mode) {
  if (const auto* calibrated = std::get_if<CalibratedCost>(&mode)) {
    if (!calibrated->model) throw ValidationError("calibrated cost mode requires a fitted model");
    const LinearCostModel& lm = *calibrated->model;
    return {lm.coefficient(Feature::Bias) +
                std::min(lm.coefficient(Feature::NPrefill), lm.coefficient(Feature::NDecode)),
            lm.coefficient(Feature::SumC)};
  }
  const BatchEntry prefill{0, 1, 0, Phase::Prefill, true};
  const BatchEntry decode{0, 1, 0, Phase::Decode, true};
  return {std::min(predict_batch_time(std::span(&prefill, 1), mode),
                   predict_batch_time(std::span(&decode, 1), mode)),
          0.0};
}

} // namespace infersched
