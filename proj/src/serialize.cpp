#include "infersched/serialize.hpp"

#include <charconv>
#include <ostream>

namespace infersched {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace

Json to_json(const ModelSpec& m) {
  return Json{{"hidden_dim", m.hidden_dim},         {"dense_dim", m.dense_dim},
              {"head_dim", m.head_dim},             {"num_query_heads", m.num_query_heads},
              {"num_kv_heads", m.num_kv_heads},     {"num_layers", m.num_layers},
              {"context_size", m.context_size},     {"bytes_per_element", m.bytes_per_element}};
}

ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec m;
  m.hidden_dim = get_or(j, "hidden_dim", m.hidden_dim);
  m.dense_dim = get_or(j, "dense_dim", m.dense_dim);
  m.head_dim = get_or(j, "head_dim", m.head_dim);
  m.num_query_heads = get_or(j, "num_query_heads", m.num_query_heads);
  m.num_kv_heads = get_or(j, "num_kv_heads", m.num_kv_heads);
  m.num_layers = get_or(j, "num_layers", m.num_layers);
  m.context_size = get_or(j, "context_size", m.context_size);
  m.bytes_per_element = get_or(j, "bytes_per_element", m.bytes_per_element);
  m.validate();
  return m;
}

Json to_json(const HardwareSpec& hw) {
  return Json{{"name", hw.name},
              {"peak_flops", hw.peak_flops},
              {"mem_bandwidth", hw.mem_bandwidth},
              {"pcie_bandwidth", hw.pcie_bandwidth},
              {"kv_cache_capacity", hw.kv_cache_capacity}};
}

HardwareSpec hardware_spec_from_json(const Json& j) {
  HardwareSpec hw;
  hw.name = get_or<std::string>(j, "name", hw.name);
  hw.peak_flops = get_or(j, "peak_flops", hw.peak_flops);
  hw.mem_bandwidth = get_or(j, "mem_bandwidth", hw.mem_bandwidth);
  hw.pcie_bandwidth = get_or(j, "pcie_bandwidth", hw.pcie_bandwidth);
  hw.kv_cache_capacity = get_or(j, "kv_cache_capacity", hw.kv_cache_capacity);
  hw.validate();
  return hw;
}

Json to_json(const LinearCostModel& model) {
  Json coeffs = Json::object();
  for (std::size_t k = 0; k < kNumFeatures; ++k) coeffs[feature_name(k)] = model.coefficients[k];
  return Json{{"coefficients", coeffs}, {"r_squared", model.r_squared}};
}

LinearCostModel linear_model_from_json(const Json& j) {
  if (!j.contains("coefficients")) throw ValidationError("cost model JSON: missing 'coefficients'");
  LinearCostModel model;
  const Json& c = j.at("coefficients");
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (!c.contains(feature_name(k))) {
      if (k == static_cast<std::size_t>(Feature::SumMPrefill)) continue;
      throw ValidationError(std::string("cost model JSON: missing coefficient '") + feature_name(k) + "'");
    }
    model.coefficients[k] = c.at(feature_name(k)).get<double>();
    if (k > 0 && model.coefficients[k] < 0) {
      throw ValidationError(std::string("cost model JSON: negative coefficient '") + feature_name(k) + "'");
    }
  }
  model.r_squared = get_or(j, "r_squared", 0.0);
  return model;
}

namespace {

template <typename E, std::size_t N>
E enum_from(const std::string& s, const E (&values)[N], const char* what) {
  for (E v : values) {
    if (s == to_string(v)) return v;
  }
  throw ValidationError(std::string("unknown ") + what + " '" + s + "'");
}

constexpr InsertionPolicy kInsertion[] = {InsertionPolicy::PrefillFirst, InsertionPolicy::DecodeFirst,
                                          InsertionPolicy::RankByInput, InsertionPolicy::RankByOutput};
constexpr ReplacementPolicy kReplacement[] = {ReplacementPolicy::NRF, ReplacementPolicy::SRF,
                                              ReplacementPolicy::PreemptionFree};
constexpr ReservationMode kReservation[] = {ReservationMode::InputOnly, ReservationMode::PeakDemand,
                                            ReservationMode::FullContext};
constexpr ArrivalKind kArrival[] = {ArrivalKind::AllAtZero, ArrivalKind::EvenlySpaced,
                                    ArrivalKind::UniformRandom, ArrivalKind::FromTrace};
constexpr HeteroGroup kGroups[] = {HeteroGroup::SISO, HeteroGroup::SILO, HeteroGroup::LISO, HeteroGroup::LILO};

} // namespace

Json to_json(const SchedulerConfig& cfg) {
  return Json{{"name", cfg.name},
              {"insertion_policy", to_string(cfg.insertion_policy)},
              {"replacement_policy", to_string(cfg.replacement_policy)},
              {"reservation_mode", to_string(cfg.reservation_mode)},
              {"hybrid_batching", cfg.hybrid_batching},
              {"chunked_prefill", cfg.chunked_prefill},
              {"token_limit", cfg.token_limit},
              {"defer_with_histogram", cfg.defer_with_histogram},
              {"hypothetical", cfg.hypothetical},
              {"histogram",
               {{"quantile", cfg.histogram.quantile},
                {"min_observations", cfg.histogram.min_observations},
                {"prior", cfg.histogram.prior}}}};
}

SchedulerConfig scheduler_config_from_json(const Json& j) {
  SchedulerConfig cfg;
  cfg.name = get_or<std::string>(j, "name", cfg.name);
  cfg.insertion_policy = enum_from(j.at("insertion_policy").get<std::string>(), kInsertion, "insertion policy");
  cfg.replacement_policy =
      enum_from(j.at("replacement_policy").get<std::string>(), kReplacement, "replacement policy");
  cfg.reservation_mode = enum_from(j.at("reservation_mode").get<std::string>(), kReservation, "reservation mode");
  cfg.hybrid_batching = j.at("hybrid_batching").get<bool>();
  cfg.chunked_prefill = j.at("chunked_prefill").get<bool>();
  cfg.token_limit = j.at("token_limit").get<Tokens>();
  cfg.defer_with_histogram = get_or(j, "defer_with_histogram", false);
  cfg.hypothetical = get_or(j, "hypothetical", false);
  if (j.contains("histogram")) {
    const Json& h = j.at("histogram");
    cfg.histogram.quantile = get_or(h, "quantile", cfg.histogram.quantile);
    cfg.histogram.min_observations = get_or(h, "min_observations", cfg.histogram.min_observations);
    cfg.histogram.prior = get_or(h, "prior", cfg.histogram.prior);
  }
  cfg.validate();
  return cfg;
}

Json to_json(const WorkloadSpec& spec) {
  Json groups = Json::array();
  for (HeteroGroup g : spec.groups) groups.push_back(to_string(g));
  const char* kind = spec.kind == WorkloadKind::FixedGrid   ? "fixed"
                     : spec.kind == WorkloadKind::HeteroMix ? "hetero"
                                                            : "trace";
  return Json{{"kind", kind},
              {"input_len", spec.input_len},
              {"output_len", spec.output_len},
              {"count", spec.count},
              {"groups", groups},
              {"seed", spec.seed},
              {"trace_path", spec.trace_path},
              {"arrival", {{"kind", to_string(spec.arrival.kind)},
                           {"horizon", spec.arrival.horizon},
                           {"seed", spec.arrival.seed}}},
              {"o_scale", spec.o_scale},
              {"m_scale", spec.m_scale}};
}

WorkloadSpec workload_spec_from_json(const Json& j) {
  WorkloadSpec spec;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fixed") spec.kind = WorkloadKind::FixedGrid;
  else if (kind == "hetero") spec.kind = WorkloadKind::HeteroMix;
  else if (kind == "trace") spec.kind = WorkloadKind::Trace;
  else throw ValidationError("workload JSON: unknown kind '" + kind + "'");
  spec.input_len = get_or(j, "input_len", spec.input_len);
  spec.output_len = get_or(j, "output_len", spec.output_len);
  spec.count = get_or(j, "count", spec.count);
  if (j.contains("groups")) {
    for (const auto& g : j.at("groups")) spec.groups.push_back(enum_from(g.get<std::string>(), kGroups, "group"));
  }
  spec.seed = get_or(j, "seed", spec.seed);
  spec.trace_path = get_or<std::string>(j, "trace_path", "");
  if (j.contains("arrival")) {
    const Json& a = j.at("arrival");
    spec.arrival.kind = enum_from(a.at("kind").get<std::string>(), kArrival, "arrival mode");
    spec.arrival.horizon = get_or(a, "horizon", spec.arrival.horizon);
    spec.arrival.seed = get_or(a, "seed", spec.arrival.seed);
  }
  spec.o_scale = get_or(j, "o_scale", 1.0);
  spec.m_scale = get_or(j, "m_scale", 1.0);
  return spec;
}

namespace {

Json to_json(const Aggregate& a) {
  return Json{{"mean", a.mean}, {"p50", a.p50}, {"p99", a.p99}, {"count", a.count}};
}

} // namespace

Json to_json(const MetricsReport& r, bool include_requests) {
  Json j{{"makespan_s", r.makespan},
         {"latency_s", to_json(r.latency)},
         {"ttft_s", to_json(r.ttft)},
         {"tpot_s", to_json(r.tpot)},
         {"tps", r.tps},
         {"preemption_count", r.preemption_count},
         {"refilled_tokens", r.refilled_tokens},
         {"progress", r.progress},
         {"avg_batch_size", r.avg_batch_size},
         {"num_batches", r.num_batches},
         {"tokens_processed", r.tokens_processed},
         {"tokens_generated", r.tokens_generated}};
  Json timeline = Json::array();
  for (const auto& [t, kv] : r.kv_usage_timeline) timeline.push_back({t, kv});
  j["kv_usage_timeline"] = timeline;
  if (include_requests) {
    Json reqs = Json::array();
    for (const auto& q : r.requests) {
      Json row{{"id", q.id}, {"latency_s", q.latency}, {"ttft_s", q.ttft}, {"preemptions", q.preemptions}};
      row["tpot_s"] = q.tpot ? Json(*q.tpot) : Json(nullptr);
      reqs.push_back(row);
    }
    j["requests"] = reqs;
  }
  return j;
}

std::vector<std::string> metrics_csv_columns() {
  return {"makespan_s",    "latency_mean_s", "latency_p50_s",   "latency_p99_s",  "ttft_mean_s",
          "ttft_p50_s",    "ttft_p99_s",     "tpot_mean_s",     "tpot_p50_s",     "tpot_p99_s",
          "tps",           "preemptions",    "refilled_tokens", "progress",       "avg_batch_size",
          "num_batches"};
}

std::vector<std::string> metrics_csv_values(const MetricsReport& r) {
  return {format_double(r.makespan),          format_double(r.latency.mean), format_double(r.latency.p50),
          format_double(r.latency.p99),       format_double(r.ttft.mean),    format_double(r.ttft.p50),
          format_double(r.ttft.p99),          format_double(r.tpot.mean),    format_double(r.tpot.p50),
          format_double(r.tpot.p99),          format_double(r.tps),          std::to_string(r.preemption_count),
          std::to_string(r.refilled_tokens),  format_double(r.progress),     format_double(r.avg_batch_size),
          std::to_string(r.num_batches)};
}

void write_schedule_csv(std::ostream& out, const ScheduleLog& log, const Workload& workload) {
  out << "batch,start_s,duration_s,request,phase,c,m_before,event\n";
  std::vector<Tokens> generated(workload.size(), 0);
  std::size_t next_event = 0;
  for (const Batch& b : log.batches) {
    while (next_event < log.preemption_events.size() && log.preemption_events[next_event].batch_index <= b.index) {
      const auto& ev = log.preemption_events[next_event++];
      out << b.index << ',' << format_double(b.start_time) << ",0," << workload[ev.request].id << ",preempt,0,"
          << ev.m_discarded << ",preempt\n";
    }
    for (const BatchEntry& e : b.entries) {
      const char* event = "none";
      if (e.generated_token) {
        ++generated[e.request];
        event = generated[e.request] == workload[e.request].output_len ? "complete" : "token";
      }
      out << b.index << ',' << format_double(b.start_time) << ',' << format_double(b.duration) << ','
          << workload[e.request].id << ',' << to_string(e.phase_at_batch) << ',' << e.c << ',' << e.m_before << ','
          << event << '\n';
    }
  }
}

} // namespace infersched
