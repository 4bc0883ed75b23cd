#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "infersched/csp.hpp"

namespace infersched {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::ProvedOptimal: return "proved-optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "?";
}

std::size_t ScheduleSolution::preemptions() const {
  std::size_t n = 0;
  for (const auto& row : e) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), 1));
  return n;
}

namespace {

std::string at(std::size_t i, std::size_t j) {
  return "request " + std::to_string(i + 1) + " batch " + std::to_string(j + 1);
}

void shape_check(const ScheduleSolution& sol, std::size_t w) {
  const std::size_t jn = sol.c.size();
  auto rows_ok = [&](const auto& t) {
    return t.size() == jn && std::all_of(t.begin(), t.end(), [&](const auto& row) { return row.size() == w; });
  };
  if (!rows_ok(sol.s) || !rows_ok(sol.m) || !rows_ok(sol.c) || !rows_ok(sol.g) || !rows_ok(sol.e) ||
      sol.u.size() != jn) {
    throw ValidationError("solution arrays have inconsistent shapes");
  }
}

// Fills s, m, g and u from c and e by replay; leaves a note for each rule broken.
ScheduleSolution replay(const std::vector<CspRequest>& requests, std::vector<std::vector<Tokens>> c,
                        std::vector<std::vector<std::uint8_t>> e, std::vector<std::string>* problems) {
  const std::size_t w = requests.size();
  ScheduleSolution sol;
  sol.status = SolveStatus::Feasible;
  const std::size_t jn = c.size();
  sol.c = std::move(c);
  sol.e = std::move(e);
  sol.s.assign(jn, std::vector<Tokens>(w));
  sol.m.assign(jn, std::vector<Tokens>(w));
  sol.g.assign(jn, std::vector<std::uint8_t>(w));
  sol.u.assign(jn, 0);
  std::vector<Tokens> s(w), m(w, 0);
  for (std::size_t i = 0; i < w; ++i) s[i] = requests[i].input_len;
  for (std::size_t j = 0; j < jn; ++j) {
    Tokens sum_c = 0;
    for (std::size_t i = 0; i < w; ++i) {
      const bool done = s[i] - requests[i].input_len >= requests[i].output_len;
      const Tokens cj = sol.c[j][i];
      const bool ej = sol.e[j][i] != 0;
      sum_c += cj;
      if (done) {
        if ((cj != 0 || ej) && problems) problems->push_back(at(i, j) + ": scheduled after completion");
        m[i] = 0;
      } else if (ej) {
        if (cj != 0 && problems) problems->push_back(at(i, j) + ": processes tokens while preempted");
        if (m[i] == 0 && problems) problems->push_back(at(i, j) + ": preempted without holding KVs");
        m[i] = 0;
      } else {
        const Tokens avail = s[i] - m[i];
        if ((cj < 0 || cj > avail) && problems) {
          problems->push_back(at(i, j) + ": c = " + std::to_string(cj) + " with " + std::to_string(avail) +
                              " available");
        }
        const bool gen = cj == avail;
        m[i] += cj;
        if (gen) {
          ++s[i];
          sol.g[j][i] = 1;
        }
      }
      sol.s[j][i] = s[i];
      sol.m[j][i] = m[i];
    }
    sol.u[j] = sum_c > 0 ? 1 : 0;
  }
  return sol;
}

} // namespace

std::vector<std::string> check_solution(const std::vector<CspRequest>& requests, const CspOptions& options,
                                        const ScheduleSolution& sol) {
  const std::size_t w = requests.size();
  shape_check(sol, w);
  std::vector<std::string> problems;
  const std::size_t jn = sol.c.size();
  for (std::size_t j = 0; j < jn; ++j) {
    Tokens sum_c = 0;
    Tokens sum_m = 0;
    for (std::size_t i = 0; i < w; ++i) {
      const CspRequest& q = requests[i];
      const Tokens s_prev = j == 0 ? q.input_len : sol.s[j - 1][i];
      const Tokens m_prev = j == 0 ? 0 : sol.m[j - 1][i];
      const bool done_prev = s_prev - q.input_len >= q.output_len;
      const Tokens cj = sol.c[j][i];
      const Tokens mj = sol.m[j][i];
      const int gj = sol.g[j][i];
      const int ej = sol.e[j][i];
      sum_c += cj;
      sum_m += mj;
      if (gj > 1 || ej > 1) problems.push_back(at(i, j) + ": indicator outside {0, 1}");
      if (sol.s[j][i] != s_prev + gj) problems.push_back(at(i, j) + ": s does not grow by g");
      if (ej == 1) {
        if (mj != 0) problems.push_back(at(i, j) + ": preempted but m != 0");
        if (cj != 0) problems.push_back(at(i, j) + ": preempted but c != 0");
        if (done_prev) problems.push_back(at(i, j) + ": preempted after completion");
        if (m_prev == 0) problems.push_back(at(i, j) + ": preempted without holding KVs");
      } else if (done_prev) {
        if (mj != 0) problems.push_back(at(i, j) + ": completed request still holds KVs");
        if (cj != 0) problems.push_back(at(i, j) + ": scheduled after completion");
      } else {
        if (mj != m_prev + cj) problems.push_back(at(i, j) + ": m != m_prev + c");
        if (cj < 0 || cj > s_prev - m_prev) problems.push_back(at(i, j) + ": c exceeds available tokens");
      }
      const bool should_generate = !done_prev && ej == 0 && cj == s_prev - m_prev;
      if ((gj == 1) != should_generate) problems.push_back(at(i, j) + ": g disagrees with c = s - m");
    }
    if (sum_c > options.token_limit) problems.push_back("batch " + std::to_string(j + 1) + ": sum c exceeds C");
    if (sum_m > options.kv_capacity) problems.push_back("batch " + std::to_string(j + 1) + ": sum m exceeds M");
    if ((sol.u[j] == 1) != (sum_c > 0)) problems.push_back("batch " + std::to_string(j + 1) + ": u disagrees with sum c");
  }
  for (std::size_t i = 0; i < w; ++i) {
    const Tokens final_s = jn == 0 ? requests[i].input_len : sol.s[jn - 1][i];
    if (final_s - requests[i].input_len != requests[i].output_len) {
      problems.push_back("request " + std::to_string(i + 1) + ": generates " +
                         std::to_string(final_s - requests[i].input_len) + " of " +
                         std::to_string(requests[i].output_len) + " tokens");
    }
  }
  return problems;
}

ScheduleLog solution_to_log(const ScheduleSolution& sol, const Workload& workload, const CspOptions& options,
                            const CostMode& cost) {
  const auto requests = csp_requests(workload);
  const auto problems = check_solution(requests, options, sol);
  if (!problems.empty()) {
    std::string msg = "solution is not a valid schedule:";
    for (std::size_t k = 0; k < problems.size() && k < 10; ++k) msg += "\n  " + problems[k];
    if (problems.size() > 10) msg += "\n  ... " + std::to_string(problems.size() - 10) + " more";
    throw ValidationError(msg);
  }
  const std::size_t w = requests.size();
  ScheduleLog log;
  std::vector<PreemptionEvent> pending;
  Seconds clock = 0.0;
  for (std::size_t j = 0; j < sol.c.size(); ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      if (sol.e[j][i] == 1) {
        pending.push_back({0, static_cast<RequestIndex>(i), j == 0 ? 0 : sol.m[j - 1][i]});
      }
    }
    if (sol.u[j] == 0) continue;
    Batch batch;
    batch.index = log.batches.size();
    Seconds start = clock;
    for (std::size_t i = 0; i < w; ++i) {
      const Tokens cj = sol.c[j][i];
      if (cj == 0) continue;
      const Tokens s_prev = j == 0 ? requests[i].input_len : sol.s[j - 1][i];
      const Tokens m_prev = j == 0 ? 0 : sol.m[j - 1][i];
      const bool decode = s_prev > requests[i].input_len && s_prev - m_prev == 1;
      batch.entries.push_back({static_cast<RequestIndex>(i), cj, m_prev, decode ? Phase::Decode : Phase::Prefill,
                               sol.g[j][i] == 1});
      start = std::max(start, requests[i].arrival);
    }
    for (PreemptionEvent& ev : pending) {
      ev.batch_index = batch.index;
      log.preemption_events.push_back(ev);
    }
    pending.clear();
    batch.start_time = start;
    batch.duration = predict_batch_time(batch.entries, cost);
    clock = start + batch.duration;
    for (const BatchEntry& e : batch.entries) {
      if (e.generated_token && sol.s[j][e.request] - requests[e.request].input_len == requests[e.request].output_len) {
        log.completion_order.push_back(e.request);
      }
    }
    log.batches.push_back(std::move(batch));
  }
  return log;
}

ScheduleSolution log_to_solution(const ScheduleLog& log, const Workload& workload) {
  const auto requests = csp_requests(workload);
  const std::size_t w = requests.size();
  const std::size_t jn = log.batches.size();
  std::vector<std::vector<Tokens>> c(jn, std::vector<Tokens>(w, 0));
  std::vector<std::vector<std::uint8_t>> e(jn, std::vector<std::uint8_t>(w, 0));
  for (std::size_t j = 0; j < jn; ++j) {
    for (const BatchEntry& be : log.batches[j].entries) c[j][be.request] += be.c;
  }
  for (const PreemptionEvent& ev : log.preemption_events) {
    if (ev.m_discarded > 0 && ev.batch_index < jn) e[ev.batch_index][ev.request] = 1;
  }
  std::vector<std::string> problems;
  ScheduleSolution sol = replay(requests, std::move(c), std::move(e), &problems);
  if (!problems.empty()) throw ValidationError("log does not replay as a schedule: " + problems.front());
  Seconds end = 0.0;
  for (const Batch& b : log.batches) end = std::max(end, b.start_time + b.duration);
  sol.objective = end;
  return sol;
}

std::vector<double> solution_assignment(const CspInstance& inst, const ScheduleSolution& sol) {
  const std::size_t w = inst.requests.size();
  shape_check(sol, w);
  if (sol.c.size() > inst.horizon) {
    throw ValidationError("solution uses " + std::to_string(sol.c.size()) + " batches, horizon is " +
                          std::to_string(inst.horizon));
  }
  std::vector<double> v(inst.variables.size(), 0.0);
  auto set = [&](const std::string& name, double value) { v[inst.var(name)] = value; };
  auto name = [](const char* p, std::size_t i, std::size_t j) {
    return std::string(p) + "_" + std::to_string(i + 1) + "_" + std::to_string(j);
  };
  const LinearSurrogate& sg = inst.surrogate;
  double acc = 0.0;
  std::vector<Tokens> s(w), m(w, 0);
  for (std::size_t i = 0; i < w; ++i) s[i] = inst.requests[i].input_len;
  for (std::size_t j = 1; j <= inst.horizon; ++j) {
    const bool real = j <= sol.c.size();
    double batch_time = 0.0;
    double start = acc;
    Tokens sum_c = 0;
    for (std::size_t i = 0; i < w; ++i) {
      const CspRequest& q = inst.requests[i];
      const Tokens m_prev = m[i];
      const Tokens cj = real ? sol.c[j - 1][i] : 0;
      const int gj = real ? sol.g[j - 1][i] : 0;
      const int ej = real ? sol.e[j - 1][i] : 0;
      const bool done_prev = s[i] - q.input_len >= q.output_len;
      if (done_prev || ej) {
        m[i] = 0;
      } else {
        m[i] += cj;
      }
      s[i] += gj;
      sum_c += cj;
      const double r = gj ? static_cast<double>(m_prev) : 0.0;
      set(name("s", i, j), static_cast<double>(s[i]));
      set(name("m", i, j), static_cast<double>(m[i]));
      set(name("c", i, j), static_cast<double>(cj));
      set(name("g", i, j), gj);
      set(name("e", i, j), ej);
      set(name("d", i, j), s[i] - q.input_len >= q.output_len ? 1.0 : 0.0);
      set(name("r", i, j), r);
      batch_time += sg.alpha * static_cast<double>(cj) + sg.beta * r;
      if (cj > 0) start = std::max(start, q.arrival);
    }
    const bool nonempty = sum_c > 0;
    if (nonempty) batch_time += sg.gamma;
    set("u_" + std::to_string(j), nonempty ? 1.0 : 0.0);
    if (inst.online) {
      for (std::size_t i = 0; i < w; ++i) set(name("a", i, j), start >= inst.requests[i].arrival ? 1.0 : 0.0);
      set("w_" + std::to_string(j), start - acc);
      acc = start + batch_time;
      set("acc_" + std::to_string(j), acc);
    }
  }
  return v;
}

ScheduleSolution read_solution_values(std::istream& in, const std::vector<CspRequest>& requests,
                                      std::size_t horizon, const std::string& source_name) {
  const std::size_t w = requests.size();
  std::vector<std::vector<Tokens>> c(horizon, std::vector<Tokens>(w, 0));
  std::vector<std::vector<std::uint8_t>> e(horizon, std::vector<std::uint8_t>(w, 0));
  struct Seen {
    char kind;
    std::size_t i, j;
    Tokens value;
  };
  std::vector<Seen> given;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string var;
    double value = 0.0;
    if (!(row >> var)) continue;
    if (!(row >> value)) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) + ": expected '<name> <value>'");
    }
    const std::string where = source_name + ":" + std::to_string(line_no);
    const auto rounded = static_cast<Tokens>(std::llround(value));
    if (std::abs(value - static_cast<double>(rounded)) > 1e-4) continue; // helper or continuous variable
    // Name forms: x_i_j for per-request variables, u_j for batches.
    const auto first = var.find('_');
    if (first == std::string::npos) continue;
    const std::string prefix = var.substr(0, first);
    if (prefix != "s" && prefix != "m" && prefix != "c" && prefix != "g" && prefix != "e") continue;
    const auto second = var.find('_', first + 1);
    if (second == std::string::npos) continue;
    std::size_t i = 0, j = 0;
    try {
      i = std::stoul(var.substr(first + 1, second - first - 1));
      j = std::stoul(var.substr(second + 1));
    } catch (const std::exception&) {
      throw ValidationError(where + ": cannot parse indices of '" + var + "'");
    }
    if (i < 1 || i > w || j < 1 || j > horizon) throw ValidationError(where + ": '" + var + "' is out of range");
    if (prefix == "c") {
      if (rounded < 0) throw ValidationError(where + ": negative c");
      c[j - 1][i - 1] = rounded;
    } else if (prefix == "e") {
      e[j - 1][i - 1] = rounded != 0 ? 1 : 0;
    } else {
      given.push_back({prefix[0], i - 1, j - 1, rounded});
    }
  }
  std::vector<std::string> problems;
  ScheduleSolution sol = replay(requests, std::move(c), std::move(e), &problems);
  for (const Seen& x : given) {
    const Tokens expect = x.kind == 's' ? sol.s[x.j][x.i] : x.kind == 'm' ? sol.m[x.j][x.i] : sol.g[x.j][x.i];
    if (x.value != expect) {
      problems.push_back(std::string(1, x.kind) + "_" + std::to_string(x.i + 1) + "_" + std::to_string(x.j + 1) +
                         " = " + std::to_string(x.value) + " but c/e imply " + std::to_string(expect));
    }
  }
  if (!problems.empty()) {
    std::string msg = source_name + ": values do not describe a schedule:";
    for (std::size_t k = 0; k < problems.size() && k < 10; ++k) msg += "\n  " + problems[k];
    throw ValidationError(msg);
  }
  return sol;
}

} // namespace infersched
