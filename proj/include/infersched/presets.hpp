#pragma once

#include <string>
#include <vector>

#include "infersched/scheduler.hpp"

namespace infersched {

// Base names: vllm, sarathi, sarathi-cs, sarathi-nocp, vllm-hy,
// sarathi-nohy, orca. Suffixes (combinable): -pf, -srf, -srf-hist, -rank-i,
// -rank-o. The returned config has hypothetical = false; callers opt in.
SchedulerConfig make_preset(const std::string& name);

const std::vector<std::string>& base_preset_names();

// Every base preset plus its -pf and -srf variants.
std::vector<std::string> standard_preset_variants();

} // namespace infersched
