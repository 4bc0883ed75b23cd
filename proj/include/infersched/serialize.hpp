#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "infersched/costmodel.hpp"
#include "infersched/metrics.hpp"
#include "infersched/scheduler.hpp"
#include "infersched/workload.hpp"

namespace infersched {

using Json = nlohmann::json;

Json to_json(const ModelSpec& m);
ModelSpec model_spec_from_json(const Json& j);
Json to_json(const HardwareSpec& hw);
HardwareSpec hardware_spec_from_json(const Json& j);

Json to_json(const LinearCostModel& model);
LinearCostModel linear_model_from_json(const Json& j);

Json to_json(const SchedulerConfig& cfg);
SchedulerConfig scheduler_config_from_json(const Json& j);

Json to_json(const WorkloadSpec& spec);
WorkloadSpec workload_spec_from_json(const Json& j);

// `include_requests` adds the per-request table.
Json to_json(const MetricsReport& report, bool include_requests = true);

// Column names of the one-row metrics CSV (without caller label columns).
std::vector<std::string> metrics_csv_columns();
std::vector<std::string> metrics_csv_values(const MetricsReport& report);

// batch,start_s,duration_s,request,phase,c,m_before,event. Preemption rows
// precede the batch they belong to and carry m_discarded in m_before.
void write_schedule_csv(std::ostream& out, const ScheduleLog& log, const Workload& workload);

// Shortest round-trip decimal form.
std::string format_double(double v);

} // namespace infersched
