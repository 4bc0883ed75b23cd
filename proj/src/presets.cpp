#include "infersched/presets.hpp"

#include <algorithm>

namespace infersched {

namespace {

struct BasePreset {
  const char* name;
  InsertionPolicy insertion;
  bool hybrid;
  bool chunked;
  Tokens token_limit;
};

constexpr BasePreset kBases[] = {
    {"vllm", InsertionPolicy::PrefillFirst, false, false, 4096},
    {"sarathi", InsertionPolicy::DecodeFirst, true, true, 512},
    {"sarathi-cs", InsertionPolicy::DecodeFirst, true, true, 4096},
    {"sarathi-nocp", InsertionPolicy::DecodeFirst, true, false, 4096},
    {"vllm-hy", InsertionPolicy::PrefillFirst, true, false, 4096},
    {"sarathi-nohy", InsertionPolicy::DecodeFirst, false, false, 4096},
    {"orca", InsertionPolicy::DecodeFirst, true, false, 4096},
};

} // namespace

const std::vector<std::string>& base_preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& b : kBases) out.emplace_back(b.name);
    return out;
  }();
  return names;
}

std::vector<std::string> standard_preset_variants() {
  std::vector<std::string> out;
  for (const auto& b : base_preset_names()) {
    out.push_back(b);
    if (b != "orca") {
      out.push_back(b + "-pf");
      out.push_back(b + "-srf");
    }
  }
  return out;
}

SchedulerConfig make_preset(const std::string& name) {
  // Longest base name that prefixes `name` at a token boundary.
  const BasePreset* base = nullptr;
  for (const auto& b : kBases) {
    const std::string bn = b.name;
    if (name.compare(0, bn.size(), bn) != 0) continue;
    if (name.size() > bn.size() && name[bn.size()] != '-') continue;
    if (!base || bn.size() > std::string(base->name).size()) base = &b;
  }
  if (!base) throw ValidationError("unknown scheduler preset '" + name + "'");

  SchedulerConfig cfg;
  cfg.name = name;
  cfg.insertion_policy = base->insertion;
  cfg.hybrid_batching = base->hybrid;
  cfg.chunked_prefill = base->chunked;
  cfg.token_limit = base->token_limit;
  if (std::string(base->name) == "orca") {
    cfg.reservation_mode = ReservationMode::FullContext;
    cfg.replacement_policy = ReplacementPolicy::PreemptionFree;
  }

  std::string rest = name.substr(std::string(base->name).size());
  static const char* kSuffixes[] = {"-srf-hist", "-srf", "-pf", "-rank-i", "-rank-o"};
  while (!rest.empty()) {
    bool matched = false;
    for (const char* suffix : kSuffixes) {
      const std::string s = suffix;
      if (rest.compare(0, s.size(), s) != 0) continue;
      if (rest.size() > s.size() && rest[s.size()] != '-') continue;
      if (s == "-pf") {
        cfg.reservation_mode = ReservationMode::PeakDemand;
        cfg.replacement_policy = ReplacementPolicy::PreemptionFree;
      } else if (s == "-srf" || s == "-srf-hist") {
        if (cfg.replacement_policy == ReplacementPolicy::PreemptionFree) {
          throw ValidationError("preset '" + name + "': -srf conflicts with a preemption-free base");
        }
        cfg.replacement_policy = ReplacementPolicy::SRF;
        cfg.defer_with_histogram = s == "-srf-hist";
      } else if (s == "-rank-i") {
        cfg.insertion_policy = InsertionPolicy::RankByInput;
      } else {
        cfg.insertion_policy = InsertionPolicy::RankByOutput;
      }
      rest = rest.substr(s.size());
      matched = true;
      break;
    }
    if (!matched) throw ValidationError("preset '" + name + "': unknown suffix '" + rest + "'");
  }
  return cfg;
}

} // namespace infersched
