#include "infersched/experiment.hpp"

#include <cstdlib>
#include <fstream>

#include "infersched/profiler.hpp"

namespace infersched {

Json to_json(const ExperimentConfig& c) {
  Json j{{"command", c.command},
         {"model", to_json(c.model)},
         {"hardware", to_json(c.hardware)},
         {"preset", c.preset},
         {"scheduler", to_json(c.scheduler)},
         {"workload", to_json(c.workload)},
         {"cost", c.cost},
         {"what_if", to_string(c.what_if)},
         {"kv_capacity", c.kv_capacity},
         {"seed", c.seed},
         {"out_dir", c.out_dir},
         {"params", c.params}};
  if (c.cost_model) j["cost_model"] = to_json(*c.cost_model);
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("command")) throw ValidationError("config: missing 'command'");
  ExperimentConfig c;
  try {
    c.command = j.at("command").get<std::string>();
    if (j.contains("model")) c.model = model_spec_from_json(j.at("model"));
    if (j.contains("hardware")) c.hardware = hardware_spec_from_json(j.at("hardware"));
    c.preset = j.value("preset", std::string());
    if (j.contains("scheduler")) c.scheduler = scheduler_config_from_json(j.at("scheduler"));
    if (j.contains("workload")) c.workload = workload_spec_from_json(j.at("workload"));
    c.cost = j.value("cost", std::string("calibrated"));
    if (j.contains("cost_model")) c.cost_model = linear_model_from_json(j.at("cost_model"));
    c.what_if = parse_what_if(j.value("what_if", std::string("none")));
    c.kv_capacity = j.value("kv_capacity", c.kv_capacity);
    c.seed = j.value("seed", std::uint64_t{0});
    c.out_dir = j.value("out_dir", std::string("."));
    if (j.contains("params")) c.params = j.at("params");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.cost != "calibrated" && c.cost != "theoretical") {
    throw ValidationError("config: cost must be 'calibrated' or 'theoretical', got '" + c.cost + "'");
  }
  return c;
}

CostMode make_cost_mode(const ExperimentConfig& c) {
  if (c.cost == "theoretical") return TheoreticalCost{c.model, c.hardware};
  if (c.cost_model) return CalibratedCost{std::make_shared<const LinearCostModel>(*c.cost_model)};
  return CalibratedCost{default_calibrated_model()};
}

LinearCostModel load_cost_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open cost model '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (j.contains("combined")) return linear_model_from_json(j.at("combined"));
  return linear_model_from_json(j);
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("INFERSCHED_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("INFERSCHED_SEED is not an unsigned integer: '") + env + "'");
  }
  return fallback;
}

} // namespace infersched
