#include "infersched/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "infersched/rng.hpp"

namespace infersched {

const char* to_string(ArrivalKind k) {
  switch (k) {
    case ArrivalKind::AllAtZero: return "zero";
    case ArrivalKind::EvenlySpaced: return "even";
    case ArrivalKind::UniformRandom: return "uniform";
    case ArrivalKind::FromTrace: return "trace";
  }
  return "?";
}

ArrivalKind parse_arrival_kind(const std::string& s) {
  if (s == "zero") return ArrivalKind::AllAtZero;
  if (s == "even") return ArrivalKind::EvenlySpaced;
  if (s == "uniform") return ArrivalKind::UniformRandom;
  if (s == "trace") return ArrivalKind::FromTrace;
  throw ValidationError("unknown arrival mode '" + s + "' (zero|even|uniform|trace)");
}

void apply_arrivals(Workload& workload, const ArrivalMode& mode) {
  if (mode.kind == ArrivalKind::FromTrace || workload.empty()) return;
  if (!(mode.horizon >= 0.0)) throw ValidationError("arrival horizon must be >= 0");
  const auto n = workload.size();
  switch (mode.kind) {
    case ArrivalKind::AllAtZero:
      for (auto& r : workload) r.arrival_time = 0.0;
      break;
    case ArrivalKind::EvenlySpaced:
      for (std::size_t i = 0; i < n; ++i) {
        workload[i].arrival_time =
            n == 1 ? 0.0 : mode.horizon * static_cast<double>(i) / static_cast<double>(n - 1);
      }
      break;
    case ArrivalKind::UniformRandom: {
      Rng rng(mode.seed);
      std::vector<Seconds> times(n);
      for (auto& t : times) t = rng.uniform(0.0, mode.horizon);
      std::sort(times.begin(), times.end());
      for (std::size_t i = 0; i < n; ++i) workload[i].arrival_time = times[i];
      break;
    }
    case ArrivalKind::FromTrace: break;
  }
}

Workload gen_fixed(Tokens input_len, Tokens output_len, std::size_t count, const ArrivalMode& arrival,
                   Tokens context_size) {
  if (count < 1) throw ValidationError("gen_fixed: W must be >= 1");
  Workload w(count);
  for (std::size_t i = 0; i < count; ++i) {
    w[i].id = "r" + std::to_string(i);
    w[i].input_len = input_len;
    w[i].output_len = output_len;
  }
  apply_arrivals(w, arrival);
  validate_workload(w, context_size);
  return w;
}

const char* to_string(HeteroGroup g) {
  switch (g) {
    case HeteroGroup::SISO: return "SISO";
    case HeteroGroup::SILO: return "SILO";
    case HeteroGroup::LISO: return "LISO";
    case HeteroGroup::LILO: return "LILO";
  }
  return "?";
}

HeteroGroup parse_hetero_group(const std::string& s) {
  if (s == "SISO") return HeteroGroup::SISO;
  if (s == "SILO") return HeteroGroup::SILO;
  if (s == "LISO") return HeteroGroup::LISO;
  if (s == "LILO") return HeteroGroup::LILO;
  throw ValidationError("unknown request group '" + s + "' (SISO|SILO|LISO|LILO)");
}

Workload gen_hetero(const std::vector<HeteroGroup>& groups, std::size_t count, std::uint64_t seed,
                    const ArrivalMode& arrival, Tokens context_size) {
  if (groups.size() != 2 || groups[0] == groups[1]) {
    throw ValidationError("gen_hetero: need exactly two distinct groups");
  }
  if (count < 2 || count % 2 != 0) throw ValidationError("gen_hetero: W must be even and >= 2");
  static constexpr std::array<Tokens, 2> kShort{8, 16};
  static constexpr std::array<Tokens, 2> kLong{512, 1024};
  Rng rng(seed);
  Workload w;
  for (HeteroGroup g : groups) {
    const bool long_in = g == HeteroGroup::LISO || g == HeteroGroup::LILO;
    const bool long_out = g == HeteroGroup::SILO || g == HeteroGroup::LILO;
    for (std::size_t k = 0; k < count / 2; ++k) {
      Request r;
      r.input_len = (long_in ? kLong : kShort)[static_cast<std::size_t>(rng.uniform_int(0, 1))];
      r.output_len = (long_out ? kLong : kShort)[static_cast<std::size_t>(rng.uniform_int(0, 1))];
      w.push_back(r);
    }
  }
  for (std::size_t i = w.size() - 1; i > 0; --i) {
    std::swap(w[i], w[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i].id = "r" + std::to_string(i);
  apply_arrivals(w, arrival);
  validate_workload(w, context_size);
  return w;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) v = static_cast<T>(std::stod(text, &used));
    else v = static_cast<T>(std::stoll(text, &used));
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": invalid number '" + text + "'");
  }
}

} // namespace

Workload parse_trace(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source_name + ": empty trace");
  if (trim(line) != "request_id,arrival_s,input_tokens,output_tokens") {
    throw ValidationError(source_name + ":1: expected header request_id,arrival_s,input_tokens,output_tokens");
  }
  Workload w;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    const auto cells = split(line, ',');
    if (cells.size() != 4) throw ValidationError(where + ": expected 4 columns, got " + std::to_string(cells.size()));
    if (cells[0].empty()) throw ValidationError(where + ": empty request_id");
    Request r;
    r.id = cells[0];
    r.arrival_time = parse_number<double>(cells[1], where);
    r.input_len = parse_number<Tokens>(cells[2], where);
    r.output_len = parse_number<Tokens>(cells[3], where);
    if (!(r.arrival_time >= 0.0) || !std::isfinite(r.arrival_time)) {
      throw ValidationError(where + ": arrival must be a finite value >= 0");
    }
    if (r.input_len < 1 || r.output_len < 1) throw ValidationError(where + ": token counts must be >= 1");
    w.push_back(r);
  }
  if (w.empty()) throw ValidationError(source_name + ": trace has no requests");
  std::stable_sort(w.begin(), w.end(),
                   [](const Request& a, const Request& b) { return a.arrival_time < b.arrival_time; });
  return w;
}

Workload load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trace '" + path + "'");
  return parse_trace(in, path);
}

ScaleResult scale(const Workload& workload, double o_scale, Tokens context_size) {
  if (!(o_scale > 0)) throw ValidationError("scale: o_scale must be > 0");
  ScaleResult out;
  out.workload = workload;
  for (auto& r : out.workload) {
    // The epsilon keeps exact products such as 215 * 2 from rounding up.
    auto o = static_cast<Tokens>(std::ceil(static_cast<double>(r.output_len) * o_scale - 1e-9));
    o = std::max<Tokens>(o, 1);
    const Tokens cap = context_size - r.input_len + 1;
    if (o > cap) {
      o = cap;
      ++out.clamped;
    }
    r.output_len = o;
  }
  return out;
}

WorkloadSpec parse_workload_spec(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  WorkloadSpec spec;
  if (kind == "fixed") spec.kind = WorkloadKind::FixedGrid;
  else if (kind == "hetero") spec.kind = WorkloadKind::HeteroMix;
  else if (kind == "trace") spec.kind = WorkloadKind::Trace;
  else throw ValidationError("workload spec '" + text + "': kind must be fixed, hetero or trace");
  if (spec.kind == WorkloadKind::Trace) spec.arrival.kind = ArrivalKind::FromTrace;

  std::map<std::string, std::string> kv;
  if (colon != std::string::npos) {
    for (const auto& item : split(text.substr(colon + 1), ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw ValidationError("workload spec '" + text + "': expected key=value, got '" + item + "'");
      }
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  const std::string where = "workload spec '" + text + "'";
  bool seen_w = false;
  for (const auto& [k, v] : kv) {
    if (k == "I") spec.input_len = parse_number<Tokens>(v, where);
    else if (k == "O") spec.output_len = parse_number<Tokens>(v, where);
    else if (k == "W") {
      const auto w = parse_number<long long>(v, where);
      if (w < 1) throw ValidationError(where + ": W must be >= 1");
      spec.count = static_cast<std::size_t>(w);
      seen_w = true;
    } else if (k == "groups") {
      for (const auto& g : split(v, '+')) spec.groups.push_back(parse_hetero_group(g));
    } else if (k == "seed") {
      spec.seed = static_cast<std::uint64_t>(parse_number<long long>(v, where));
      spec.arrival.seed = spec.seed;
    } else if (k == "path") spec.trace_path = v;
    else if (k == "arrival") spec.arrival.kind = parse_arrival_kind(v);
    else if (k == "T") spec.arrival.horizon = parse_number<double>(v, where);
    else if (k == "o_scale") spec.o_scale = parse_number<double>(v, where);
    else if (k == "m_scale") spec.m_scale = parse_number<double>(v, where);
    else throw ValidationError(where + ": unknown key '" + k + "'");
  }
  if (spec.kind != WorkloadKind::Trace && !seen_w) throw ValidationError(where + ": W is required");
  if (spec.kind == WorkloadKind::Trace && spec.trace_path.empty()) throw ValidationError(where + ": path is required");
  if (spec.kind == WorkloadKind::HeteroMix && spec.groups.empty()) throw ValidationError(where + ": groups is required");
  if (!(spec.o_scale > 0) || !(spec.m_scale > 0)) throw ValidationError(where + ": scales must be > 0");
  return spec;
}

std::string format_workload_spec(const WorkloadSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  switch (spec.kind) {
    case WorkloadKind::FixedGrid:
      out << "fixed:I=" << spec.input_len << ",O=" << spec.output_len << ",W=" << spec.count;
      break;
    case WorkloadKind::HeteroMix: {
      out << "hetero:groups=";
      for (std::size_t i = 0; i < spec.groups.size(); ++i) out << (i ? "+" : "") << to_string(spec.groups[i]);
      out << ",W=" << spec.count;
      break;
    }
    case WorkloadKind::Trace: out << "trace:path=" << spec.trace_path; break;
  }
  out << ",seed=" << spec.seed << ",arrival=" << to_string(spec.arrival.kind) << ",T=" << spec.arrival.horizon;
  if (spec.o_scale != 1.0) out << ",o_scale=" << spec.o_scale;
  if (spec.m_scale != 1.0) out << ",m_scale=" << spec.m_scale;
  return out.str();
}

BuiltWorkload build_workload(const WorkloadSpec& spec, Tokens context_size) {
  Workload w;
  switch (spec.kind) {
    case WorkloadKind::FixedGrid:
      w = gen_fixed(spec.input_len, spec.output_len, spec.count, spec.arrival, context_size);
      break;
    case WorkloadKind::HeteroMix:
      w = gen_hetero(spec.groups, spec.count, spec.seed, spec.arrival, context_size);
      break;
    case WorkloadKind::Trace:
      w = load_trace(spec.trace_path);
      apply_arrivals(w, spec.arrival);
      break;
  }
  BuiltWorkload out;
  if (spec.o_scale != 1.0) {
    auto scaled = scale(w, spec.o_scale, context_size);
    out.workload = std::move(scaled.workload);
    out.clamped = scaled.clamped;
  } else {
    out.workload = std::move(w);
  }
  validate_workload(out.workload, context_size);
  return out;
}

} // namespace infersched
