#include <algorithm>
#include <cmath>

#include "infersched/csp.hpp"

namespace infersched {

std::vector<CspRequest> csp_requests(const Workload& workload) {
  std::vector<CspRequest> out;
  out.reserve(workload.size());
  for (const Request& r : workload) out.push_back({r.input_len, r.output_len, r.arrival_time});
  return out;
}

LinearSurrogate linear_surrogate(const CostMode& mode) {
  if (const auto* calibrated = std::get_if<CalibratedCost>(&mode)) {
    if (!calibrated->model) throw ValidationError("calibrated cost mode requires a fitted model");
    const LinearCostModel& lm = *calibrated->model;
    return {lm.coefficient(Feature::Bias), lm.coefficient(Feature::SumC), lm.coefficient(Feature::SumMDecode)};
  }
  const auto& theo = std::get<TheoreticalCost>(mode);
  const Tokens s = theo.model.context_size;
  auto one = [&](Tokens c, Tokens m, Phase phase) {
    const BatchEntry e{0, c, m, phase, true};
    return predict_batch_time(std::span(&e, 1), mode);
  };
  LinearSurrogate out;
  out.gamma = one(1, 1, Phase::Decode);
  const Tokens big_c = std::max<Tokens>(2, std::min<Tokens>(1024, s));
  out.alpha = std::max(0.0, (one(big_c, 0, Phase::Prefill) - one(1, 0, Phase::Prefill)) /
                                static_cast<double>(big_c - 1));
  const Tokens big_m = std::max<Tokens>(2, s - 1);
  out.beta = std::max(0.0, (one(1, big_m, Phase::Decode) - one(1, 1, Phase::Decode)) /
                               static_cast<double>(big_m - 1));
  return out;
}

namespace {

Tokens ceil_div(Tokens a, Tokens b) { return (a + b - 1) / b; }

} // namespace

std::size_t minimal_horizon(const std::vector<CspRequest>& requests, Tokens token_limit) {
  if (token_limit < 1) throw ValidationError("token limit must be >= 1");
  std::size_t prefill = 0;
  Tokens max_o = 0;
  for (const CspRequest& r : requests) {
    prefill += static_cast<std::size_t>(ceil_div(r.input_len, token_limit));
    max_o = std::max(max_o, r.output_len);
  }
  return prefill + static_cast<std::size_t>(max_o);
}

std::size_t default_horizon(const std::vector<CspRequest>& requests, Tokens token_limit) {
  if (token_limit < 1) throw ValidationError("token limit must be >= 1");
  std::size_t total = requests.size();
  for (const CspRequest& r : requests) {
    total += static_cast<std::size_t>(ceil_div(r.input_len, token_limit) + r.output_len);
  }
  return total;
}

std::optional<std::size_t> CspInstance::find_var(const std::string& name) const {
  auto it = std::lower_bound(sorted_names_.begin(), sorted_names_.end(), name,
                             [](const auto& p, const std::string& n) { return p.first < n; });
  if (it == sorted_names_.end() || it->first != name) return std::nullopt;
  return it->second;
}

std::size_t CspInstance::var(const std::string& name) const {
  if (auto idx = find_var(name)) return *idx;
  throw ValidationError("unknown LP variable '" + name + "'");
}

namespace {

class Builder {
 public:
  explicit Builder(CspInstance& inst) : inst_(inst) {}

  std::size_t add_var(std::string name, VarType type, double lo, double hi) {
    inst_.variables.push_back({std::move(name), type, lo, hi});
    return inst_.variables.size() - 1;
  }

  // Terms with a constant part; constants move to the right-hand side.
  struct Expr {
    std::vector<LpTerm> terms;
    double constant = 0.0;
    Expr& add(std::size_t v, double coef) {
      terms.push_back({v, coef});
      return *this;
    }
    Expr& add_const(double k) {
      constant += k;
      return *this;
    }
  };

  void add(std::string name, const Expr& lhs, Sense sense, double rhs) {
    LpConstraint con;
    con.name = std::move(name);
    con.sense = sense;
    con.rhs = rhs - lhs.constant;
    for (const LpTerm& t : lhs.terms) {
      if (t.coef == 0.0) continue;
      auto it = std::find_if(con.terms.begin(), con.terms.end(), [&](const LpTerm& x) { return x.var == t.var; });
      if (it != con.terms.end()) {
        it->coef += t.coef;
      } else {
        con.terms.push_back(t);
      }
    }
    std::erase_if(con.terms, [](const LpTerm& t) { return t.coef == 0.0; });
    if (con.rhs == 0.0) con.rhs = 0.0; // no "-0" in the file
    inst_.constraints.push_back(std::move(con));
  }

 private:
  CspInstance& inst_;
};

std::string nm(const char* prefix, std::size_t i, std::size_t j) {
  return std::string(prefix) + "_" + std::to_string(i + 1) + "_" + std::to_string(j);
}
std::string nm(const char* prefix, std::size_t j) { return std::string(prefix) + "_" + std::to_string(j); }

} // namespace

CspInstance build_instance(const std::vector<CspRequest>& requests, const LinearSurrogate& surrogate,
                           std::size_t horizon, const CspOptions& options) {
  if (requests.empty()) throw ValidationError("CSP instance needs at least one request");
  if (options.token_limit < 1 || options.kv_capacity < 1 || options.context_size < 1) {
    throw ValidationError("C, M and S must be >= 1");
  }
  if (surrogate.gamma < 0 || surrogate.alpha < 0 || surrogate.beta < 0) {
    throw ValidationError("cost surrogate coefficients must be non-negative");
  }
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const CspRequest& r = requests[i];
    if (r.input_len < 1 || r.output_len < 1 || r.arrival < 0) {
      throw ValidationError("request " + std::to_string(i + 1) + " is malformed");
    }
    if (r.input_len + r.output_len > options.context_size) {
      throw ValidationError("request " + std::to_string(i + 1) + " exceeds the context size");
    }
    if (r.input_len + r.output_len - 1 > options.kv_capacity) {
      throw ValidationError("request " + std::to_string(i + 1) + " cannot fit in the KV cache");
    }
  }
  const std::size_t min_h = minimal_horizon(requests, options.token_limit);
  if (horizon < min_h) {
    throw ValidationError("horizon " + std::to_string(horizon) + " is below the minimal horizon " +
                          std::to_string(min_h) + "; the instance would be infeasible by construction");
  }

  CspInstance inst;
  inst.requests = requests;
  inst.horizon = horizon;
  inst.options = options;
  inst.surrogate = surrogate;
  inst.big_m = static_cast<double>(
                   std::max({options.context_size, options.kv_capacity, options.token_limit})) + 1.0;
  inst.online = std::any_of(requests.begin(), requests.end(), [](const CspRequest& r) { return r.arrival > 0; });

  const std::size_t w = requests.size();
  const std::size_t jn = horizon;
  const double bm = inst.big_m;
  Builder b(inst);
  using Expr = Builder::Expr;

  // Index tables, [i][j] with j = 1..J stored at j-1.
  auto table = [&] { return std::vector<std::vector<std::size_t>>(w, std::vector<std::size_t>(jn)); };
  auto s = table(), m = table(), c = table(), g = table(), e = table(), d = table(), r = table();
  std::vector<std::size_t> u(jn);
  for (std::size_t j = 1; j <= jn; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      const CspRequest& q = requests[i];
      const double io = static_cast<double>(q.input_len + q.output_len);
      const double peak = io - 1.0;
      s[i][j - 1] = b.add_var(nm("s", i, j), VarType::Integer, static_cast<double>(q.input_len), io);
      m[i][j - 1] = b.add_var(nm("m", i, j), VarType::Integer, 0.0,
                              std::min(peak, static_cast<double>(options.kv_capacity)));
      c[i][j - 1] = b.add_var(nm("c", i, j), VarType::Integer, 0.0,
                              std::min(peak, static_cast<double>(options.token_limit)));
      g[i][j - 1] = b.add_var(nm("g", i, j), VarType::Binary, 0.0, 1.0);
      e[i][j - 1] = b.add_var(nm("e", i, j), VarType::Binary, 0.0, 1.0);
      d[i][j - 1] = b.add_var(nm("d", i, j), VarType::Binary, 0.0, 1.0);
      r[i][j - 1] = b.add_var(nm("r", i, j), VarType::Continuous, 0.0, peak);
    }
    u[j - 1] = b.add_var(nm("u", j), VarType::Binary, 0.0, 1.0);
  }

  // Online helpers: a_i_j (arrived before batch j starts), w_j idle wait, acc_j end time.
  std::vector<std::vector<std::size_t>> a;
  std::vector<std::size_t> idle, acc;
  if (inst.online) {
    double last_arrival = 0.0;
    for (const CspRequest& q : requests) last_arrival = std::max(last_arrival, q.arrival);
    // Upper bound on any batch time under the surrogate, times J, plus the last arrival.
    double max_batch = surrogate.gamma;
    max_batch += surrogate.alpha * static_cast<double>(options.token_limit);
    double peak_sum = 0.0;
    for (const CspRequest& q : requests) peak_sum += static_cast<double>(q.input_len + q.output_len - 1);
    max_batch += surrogate.beta * peak_sum;
    inst.time_big_m = last_arrival + max_batch * static_cast<double>(jn) + 1.0;
    a.assign(w, std::vector<std::size_t>(jn));
    for (std::size_t j = 1; j <= jn; ++j) {
      for (std::size_t i = 0; i < w; ++i) a[i][j - 1] = b.add_var(nm("a", i, j), VarType::Binary, 0.0, 1.0);
      idle.push_back(b.add_var(nm("w", j), VarType::Continuous, 0.0, inst.time_big_m));
      acc.push_back(b.add_var(nm("acc", j), VarType::Continuous, 0.0, inst.time_big_m));
    }
  }

  // Previous-batch values: constants at j = 1.
  auto prev = [&](const std::vector<std::vector<std::size_t>>& t, std::size_t i, std::size_t j, double init,
                  Expr& ex, double coef) {
    if (j == 1) {
      ex.add_const(coef * init);
    } else {
      ex.add(t[i][j - 2], coef);
    }
  };

  for (std::size_t i = 0; i < w; ++i) {
    const CspRequest& q = requests[i];
    const double in = static_cast<double>(q.input_len);
    const double out = static_cast<double>(q.output_len);
    Expr term;
    for (std::size_t j = 1; j <= jn; ++j) term.add(g[i][j - 1], 1.0);
    b.add("term_" + std::to_string(i + 1), term, Sense::Eq, out);

    for (std::size_t j = 1; j <= jn; ++j) {
      const std::size_t sj = s[i][j - 1], mj = m[i][j - 1], cj = c[i][j - 1];
      const std::size_t gj = g[i][j - 1], ej = e[i][j - 1], dj = d[i][j - 1], rj = r[i][j - 1];

      Expr seq;
      seq.add(sj, 1.0).add(gj, -1.0);
      prev(s, i, j, in, seq, -1.0);
      b.add(nm("seq", i, j), seq, Sense::Eq, 0.0);

      Expr mem1;
      mem1.add(mj, 1.0).add(ej, bm);
      b.add(nm("mem1", i, j), mem1, Sense::Le, bm);

      Expr mem2;
      mem2.add(mj, 1.0).add(cj, -1.0).add(ej, -bm);
      prev(m, i, j, 0.0, mem2, -1.0);
      b.add(nm("mem2", i, j), mem2, Sense::Le, 0.0);

      Expr mem3;
      mem3.add(mj, 1.0).add(cj, -1.0).add(ej, bm);
      prev(m, i, j, 0.0, mem3, -1.0);
      prev(d, i, j, 0.0, mem3, bm);
      b.add(nm("mem3", i, j), mem3, Sense::Ge, 0.0);

      Expr mem4;
      mem4.add(mj, 1.0);
      prev(d, i, j, 0.0, mem4, bm);
      b.add(nm("mem4", i, j), mem4, Sense::Le, bm);

      Expr tok1;
      tok1.add(cj, 1.0).add(ej, bm);
      b.add(nm("tok1", i, j), tok1, Sense::Le, bm);

      Expr tok2;
      tok2.add(cj, 1.0).add(ej, -bm);
      prev(s, i, j, in, tok2, -1.0);
      prev(m, i, j, 0.0, tok2, 1.0);
      b.add(nm("tok2", i, j), tok2, Sense::Le, 0.0);

      Expr tok3;
      tok3.add(cj, 1.0);
      prev(d, i, j, 0.0, tok3, bm);
      b.add(nm("tok3", i, j), tok3, Sense::Le, bm);

      // g = 1 exactly when c equals the unprocessed tokens s - m.
      Expr gen1;
      gen1.add(cj, 1.0).add(gj, -bm);
      prev(s, i, j, in, gen1, -1.0);
      prev(m, i, j, 0.0, gen1, 1.0);
      b.add(nm("gen1", i, j), gen1, Sense::Ge, -bm);

      Expr gen2;
      gen2.add(cj, 1.0).add(gj, -bm);
      prev(s, i, j, in, gen2, -1.0);
      prev(m, i, j, 0.0, gen2, 1.0);
      b.add(nm("gen2", i, j), gen2, Sense::Le, -1.0);

      Expr ge;
      ge.add(gj, 1.0).add(ej, 1.0);
      b.add(nm("ge", i, j), ge, Sense::Le, 1.0);

      // Preemption only for an unfinished request that holds KVs.
      Expr edone;
      edone.add(ej, 1.0);
      prev(d, i, j, 0.0, edone, 1.0);
      b.add(nm("edone", i, j), edone, Sense::Le, 1.0);

      Expr eheld;
      eheld.add(ej, 1.0);
      prev(m, i, j, 0.0, eheld, -1.0);
      b.add(nm("eheld", i, j), eheld, Sense::Le, 0.0);

      // d = 1 once all O tokens exist: O d <= s - I and s - d <= I + O - 1.
      Expr done1;
      done1.add(dj, out).add(sj, -1.0);
      b.add(nm("done1", i, j), done1, Sense::Le, -in);

      Expr done2;
      done2.add(sj, 1.0).add(dj, -1.0);
      b.add(nm("done2", i, j), done2, Sense::Le, in + out - 1.0);

      // r >= m_prev for a generating entry.
      Expr read;
      read.add(rj, 1.0).add(gj, -bm);
      prev(m, i, j, 0.0, read, -1.0);
      b.add(nm("read", i, j), read, Sense::Ge, -bm);

      if (inst.online) {
        Expr gate;
        gate.add(cj, 1.0).add(a[i][j - 1], -std::min(in + out - 1.0, static_cast<double>(options.token_limit)));
        b.add(nm("gate", i, j), gate, Sense::Le, 0.0);
        // Batch j starts at acc_{j-1} + w_j, which must reach T_i when a = 1.
        Expr start;
        if (j > 1) start.add(acc[j - 2], 1.0);
        start.add(idle[j - 1], 1.0).add(a[i][j - 1], -q.arrival);
        b.add(nm("arrive", i, j), start, Sense::Ge, 0.0);
      }
    }
  }

  for (std::size_t j = 1; j <= jn; ++j) {
    Expr tokens;
    Expr memory;
    Expr nonempty;
    for (std::size_t i = 0; i < w; ++i) {
      tokens.add(c[i][j - 1], 1.0);
      memory.add(m[i][j - 1], 1.0);
      nonempty.add(c[i][j - 1], -1.0);
    }
    tokens.add(u[j - 1], -static_cast<double>(options.token_limit));
    b.add(nm("batch_c", j), tokens, Sense::Le, 0.0);
    b.add(nm("batch_m", j), memory, Sense::Le, static_cast<double>(options.kv_capacity));
    nonempty.add(u[j - 1], 1.0);
    b.add(nm("nonempty", j), nonempty, Sense::Le, 0.0);
  }

  // Objective: surrogate batch times, plus idle waits online (then it is acc_J).
  Expr obj;
  for (std::size_t j = 1; j <= jn; ++j) {
    obj.add(u[j - 1], surrogate.gamma);
    for (std::size_t i = 0; i < w; ++i) {
      obj.add(c[i][j - 1], surrogate.alpha);
      obj.add(r[i][j - 1], surrogate.beta);
    }
  }
  if (inst.online) {
    for (std::size_t j = 1; j <= jn; ++j) {
      Expr step;
      step.add(acc[j - 1], 1.0).add(idle[j - 1], -1.0).add(u[j - 1], -surrogate.gamma);
      if (j > 1) step.add(acc[j - 2], -1.0);
      for (std::size_t i = 0; i < w; ++i) {
        step.add(c[i][j - 1], -surrogate.alpha).add(r[i][j - 1], -surrogate.beta);
      }
      b.add(nm("clock", j), step, Sense::Eq, 0.0);
      obj.add(idle[j - 1], 1.0);
    }
  }
  for (const LpTerm& t : obj.terms) {
    if (t.coef != 0.0) inst.objective.push_back(t);
  }
  if (options.latency_cap) {
    Expr cap;
    cap.terms = inst.objective;
    b.add("latency_cap", cap, Sense::Le, *options.latency_cap);
  }

  inst.sorted_names_.reserve(inst.variables.size());
  for (std::size_t k = 0; k < inst.variables.size(); ++k) inst.sorted_names_.emplace_back(inst.variables[k].name, k);
  std::sort(inst.sorted_names_.begin(), inst.sorted_names_.end());
  return inst;
}

std::vector<std::string> violated_constraints(const CspInstance& instance, const std::vector<double>& values) {
  if (values.size() != instance.variables.size()) {
    throw ValidationError("assignment has " + std::to_string(values.size()) + " values, instance has " +
                          std::to_string(instance.variables.size()) + " variables");
  }
  std::vector<std::string> bad;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const LpVariable& v = instance.variables[k];
    const double tol = 1e-6 * std::max(1.0, std::abs(v.upper));
    if (values[k] < v.lower - tol || values[k] > v.upper + tol) bad.push_back("bounds:" + v.name);
    if (v.type != VarType::Continuous && std::abs(values[k] - std::round(values[k])) > 1e-6) {
      bad.push_back("integrality:" + v.name);
    }
  }
  for (const LpConstraint& con : instance.constraints) {
    double lhs = 0.0;
    double scale = std::abs(con.rhs);
    for (const LpTerm& t : con.terms) {
      lhs += t.coef * values[t.var];
      scale = std::max(scale, std::abs(t.coef * values[t.var]));
    }
    const double tol = 1e-6 * std::max(1.0, scale);
    const bool ok = con.sense == Sense::Le   ? lhs <= con.rhs + tol
                    : con.sense == Sense::Ge ? lhs >= con.rhs - tol
                                             : std::abs(lhs - con.rhs) <= tol;
    if (!ok) bad.push_back(con.name);
  }
  return bad;
}

double objective_value(const CspInstance& instance, const std::vector<double>& values) {
  double total = 0.0;
  for (const LpTerm& t : instance.objective) total += t.coef * values.at(t.var);
  return total;
}

} // namespace infersched
