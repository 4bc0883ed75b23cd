#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "infersched/csp.hpp"
#include "infersched/presets.hpp"
#include "infersched/simulator.hpp"
#include "infersched/verify.hpp"

namespace infersched {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct State {
  std::vector<Tokens> k; // generated tokens
  std::vector<Tokens> m; // cached KVs; 0 once done
  Seconds clock = 0.0;
  bool preempted = false;
};

struct Action {
  std::vector<Tokens> c;
  std::vector<std::uint8_t> e;
  bool idle = false; // wait for the next arrival
};

struct Child {
  Action action;
  State state;
  double cost = 0.0;
  double bound = 0.0; // cost + heuristic of the child
};

struct KeyHash {
  std::size_t operator()(const std::vector<std::int64_t>& v) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ v.size();
    for (std::int64_t x : v) {
      h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

struct MemoEntry {
  double value = 0.0;
  bool exact = false;
};

class Search {
 public:
  Search(const std::vector<CspRequest>& reqs, const CspOptions& options, const SolveLimits& limits,
         const CostMode& cost, Tokens quantum)
      : reqs_(reqs), options_(options), limits_(limits), cost_(cost), quantum_(quantum), w_(reqs.size()) {
    const CostFloor floor = cost_floor(cost);
    per_batch_ = floor.per_batch;
    per_token_ = std::max(0.0, floor.per_token);
    group_.assign(w_, 0);
    for (std::size_t i = 0; i < w_; ++i) {
      group_[i] = i;
      for (std::size_t p = 0; p < i; ++p) {
        if (reqs[p].input_len == reqs[i].input_len && reqs[p].output_len == reqs[i].output_len &&
            reqs[p].arrival == reqs[i].arrival) {
          group_[i] = group_[p];
          break;
        }
      }
    }
    deadline_ = std::chrono::steady_clock::now() +
                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(limits.time_limit_s));
  }

  State root() const {
    State s;
    s.k.assign(w_, 0);
    s.m.assign(w_, 0);
    return s;
  }

  bool done(const State& s, std::size_t i) const { return s.k[i] >= reqs_[i].output_len; }
  bool all_done(const State& s) const {
    for (std::size_t i = 0; i < w_; ++i) {
      if (!done(s, i)) return false;
    }
    return true;
  }
  bool all_arrived(const State& s) const {
    return std::all_of(reqs_.begin(), reqs_.end(), [&](const CspRequest& r) { return r.arrival <= s.clock; });
  }

  double heuristic(const State& s) const {
    Tokens max_rem = 0;
    Tokens tokens = 0;
    for (std::size_t i = 0; i < w_; ++i) {
      if (done(s, i)) continue;
      max_rem = std::max(max_rem, reqs_[i].output_len - s.k[i]);
      tokens += reqs_[i].input_len + reqs_[i].output_len - 1 - s.m[i];
    }
    if (per_batch_ < 0.0) return 0.0;
    double h = per_batch_ * static_cast<double>(max_rem) + per_token_ * static_cast<double>(tokens);
    for (std::size_t i = 0; i < w_; ++i) {
      if (reqs_[i].arrival > s.clock) {
        const double alone = per_batch_ * static_cast<double>(reqs_[i].output_len) +
                             per_token_ * static_cast<double>(reqs_[i].input_len + reqs_[i].output_len - 1);
        h = std::max(h, reqs_[i].arrival - s.clock + alone);
      }
    }
    return h;
  }

  std::vector<std::int64_t> key(const State& s) const {
    std::vector<std::int64_t> out;
    out.reserve(2 * w_ + 3);
    std::vector<std::pair<Tokens, Tokens>> members;
    for (std::size_t gidx = 0; gidx < w_; ++gidx) {
      members.clear();
      for (std::size_t i = 0; i < w_; ++i) {
        if (group_[i] == gidx) members.emplace_back(s.k[i], s.m[i]);
      }
      std::sort(members.begin(), members.end());
      for (const auto& [k, m] : members) {
        out.push_back(k);
        out.push_back(m);
      }
    }
    out.push_back(s.preempted ? 1 : 0);
    if (!all_arrived(s)) {
      std::int64_t bits = 0;
      std::memcpy(&bits, &s.clock, sizeof bits);
      out.push_back(bits);
    }
    return out;
  }

  // Same group and same progress: interchangeable.
  bool twin(const State& s, std::size_t a, std::size_t b) const {
    return group_[a] == group_[b] && s.k[a] == s.k[b] && s.m[a] == s.m[b];
  }

  Tokens available(const State& s, std::size_t i) const { return reqs_[i].input_len + s.k[i] - s.m[i]; }

  void chunk_choices(Tokens avail, Tokens budget, std::vector<Tokens>& out) const {
    out.clear();
    if (budget < 1) return;
    if (avail <= budget) out.push_back(avail);
    if (avail > budget) out.push_back(budget);
    const Tokens top = std::min(avail - 1, budget);
    for (Tokens c = (top / quantum_) * quantum_; c >= 1; c -= quantum_) {
      if (c != out.back()) out.push_back(c);
    }
  }

  State apply(const State& s, const Action& a) const {
    State t = s;
    if (a.idle) {
      double next = kInf;
      for (const CspRequest& r : reqs_) {
        if (r.arrival > s.clock) next = std::min(next, r.arrival);
      }
      t.clock = next;
      return t;
    }
    for (std::size_t i = 0; i < w_; ++i) {
      if (a.e[i]) {
        t.m[i] = 0;
        t.preempted = true;
      }
      if (a.c[i] == 0) continue;
      const Tokens avail = available(s, i);
      t.m[i] += a.c[i];
      if (a.c[i] == avail) {
        ++t.k[i];
        if (done(t, i)) t.m[i] = 0;
      }
    }
    return t;
  }

  std::vector<BatchEntry> entries(const State& s, const Action& a) const {
    std::vector<BatchEntry> out;
    for (std::size_t i = 0; i < w_; ++i) {
      if (a.c[i] == 0) continue;
      const Tokens avail = available(s, i);
      const bool decode = s.k[i] >= 1 && avail == 1;
      out.push_back({static_cast<RequestIndex>(i), a.c[i], s.m[i], decode ? Phase::Decode : Phase::Prefill,
                     a.c[i] == avail});
    }
    return out;
  }

  std::vector<Child> children(const State& s) const {
    std::vector<Child> out;
    bool waiting = false;
    for (std::size_t i = 0; i < w_; ++i) {
      if (!done(s, i) && reqs_[i].arrival > s.clock) waiting = true;
    }
    if (waiting) {
      Action idle;
      idle.idle = true;
      Child ch;
      ch.state = apply(s, idle);
      ch.cost = ch.state.clock - s.clock;
      ch.action = std::move(idle);
      out.push_back(std::move(ch));
    }

    Action a;
    a.c.assign(w_, 0);
    a.e.assign(w_, 0);
    std::vector<std::vector<Tokens>> choice_buf(w_);
    compose(s, 0, options_.token_limit, a, choice_buf, out);

    for (Child& ch : out) ch.bound = ch.cost + heuristic(ch.state);
    std::stable_sort(out.begin(), out.end(), [](const Child& x, const Child& y) { return x.bound < y.bound; });
    return out;
  }

  void compose(const State& s, std::size_t i, Tokens budget, Action& a, std::vector<std::vector<Tokens>>& buf,
               std::vector<Child>& out) const {
    if (i == w_) {
      if (budget == options_.token_limit) return; // empty batch
      finish_batch(s, a, out);
      return;
    }
    const bool eligible = !done(s, i) && reqs_[i].arrival <= s.clock;
    // Twins take non-increasing c in index order.
    Tokens cap = std::numeric_limits<Tokens>::max();
    for (std::size_t p = i; p-- > 0;) {
      if (twin(s, p, i)) {
        cap = a.c[p];
        break;
      }
    }
    if (eligible) {
      chunk_choices(available(s, i), budget, buf[i]);
      for (Tokens c : buf[i]) {
        if (c > cap) continue;
        a.c[i] = c;
        compose(s, i + 1, budget - c, a, buf, out);
      }
      a.c[i] = 0;
    }
    compose(s, i + 1, budget, a, buf, out);
  }

  void finish_batch(const State& s, Action& a, std::vector<Child>& out) const {
    Tokens need = 0;
    std::vector<std::size_t> holders;
    for (std::size_t i = 0; i < w_; ++i) {
      if (done(s, i)) continue;
      need += s.m[i] + a.c[i];
      if (a.c[i] == 0 && s.m[i] > 0) holders.push_back(i);
    }
    auto emit = [&] {
      Child ch;
      ch.action = a;
      ch.state = apply(s, a);
      const auto batch = entries(s, a);
      ch.cost = predict_batch_time(batch, cost_);
      if (!(ch.cost > 0.0)) throw RuntimeFailure("cost model returned a non-positive batch time");
      out.push_back(std::move(ch));
    };
    if (need <= options_.kv_capacity) {
      emit();
      return;
    }
    if (limits_.forbid_preemption) return;
    const std::size_t h = holders.size();
    for (std::uint32_t mask = 1; mask < (1u << h); ++mask) {
      Tokens freed = 0;
      for (std::size_t b = 0; b < h; ++b) {
        if (mask & (1u << b)) freed += s.m[holders[b]];
      }
      if (need - freed > options_.kv_capacity) continue;
      bool minimal = true;
      bool canonical = true;
      for (std::size_t b = 0; b < h; ++b) {
        if (!(mask & (1u << b))) continue;
        if (need - (freed - s.m[holders[b]]) <= options_.kv_capacity) minimal = false;
        // Among twins only a prefix is preempted.
        for (std::size_t p = 0; p < b; ++p) {
          if (!(mask & (1u << p)) && twin(s, holders[p], holders[b])) canonical = false;
        }
      }
      if (!minimal || !canonical) continue;
      for (std::size_t b = 0; b < h; ++b) a.e[holders[b]] = (mask & (1u << b)) ? 1 : 0;
      emit();
      for (std::size_t b = 0; b < h; ++b) a.e[holders[b]] = 0;
    }
  }

  bool out_of_budget() {
    if (aborted_) return true;
    if (nodes_ >= limits_.max_nodes) aborted_ = true;
    if ((nodes_ & 1023) == 0 && std::chrono::steady_clock::now() > deadline_) aborted_ = true;
    return aborted_;
  }

  // Returns the exact cost-to-go if it is below `budget`, otherwise a lower
  // bound that is >= budget.
  double go(const State& s, double budget) {
    ++nodes_;
    if (all_done(s)) return (limits_.require_preemption && !s.preempted) ? kInf : 0.0;
    if (out_of_budget()) return kInf;
    const auto k = key(s);
    double lb = heuristic(s);
    if (auto it = memo_.find(k); it != memo_.end()) {
      if (it->second.exact) return it->second.value;
      lb = std::max(lb, it->second.value);
    }
    if (lb >= budget) return lb;

    std::vector<Child> kids = children(s);
    double best = kInf;
    bool found = false;
    double fail = kInf;
    for (Child& ch : kids) {
      const double limit = std::min(budget, best);
      if (ch.bound >= limit) {
        fail = std::min(fail, ch.bound);
        break; // sorted by bound
      }
      path_.push_back(&ch.action);
      path_cost_ += ch.cost;
      const double child_budget = limit - ch.cost;
      const double v = go(ch.state, child_budget);
      if (!aborted_ && v < child_budget) {
        best = ch.cost + v;
        found = true;
        note_solution(ch.state, path_cost_ + v);
      } else {
        fail = std::min(fail, std::max(ch.cost + v, limit));
      }
      path_cost_ -= ch.cost;
      path_.pop_back();
      if (aborted_) return kInf;
    }
    // Preempt-and-refill can revisit a state, so an inner visit may already
    // have stored an exact value; keep it.
    MemoEntry& slot = memo_[k];
    if (slot.exact) return slot.value;
    if (found) {
      slot = {best, true};
      return best;
    }
    slot.value = std::max({slot.value, lb, fail});
    return slot.value;
  }

  // A complete schedule through the current path with total cost `total`.
  void note_solution(const State& reached, double total) {
    if (!(total < incumbent_)) return;
    incumbent_ = total;
    incumbent_path_.clear();
    for (const Action* a : path_) incumbent_path_.push_back(*a);
    extend_exact(reached, incumbent_path_);
    have_path_ = true;
    if (stop_at_ && total <= *stop_at_) {
      hit_target_ = true;
      aborted_ = true;
    }
  }

  // Follows exact memo values from `s` to a terminal state.
  void extend_exact(State s, std::vector<Action>& out) const {
    while (!all_done(s)) {
      const auto it = memo_.find(key(s));
      if (it == memo_.end() || !it->second.exact) throw RuntimeFailure("exact search: broken memo chain");
      const double target = it->second.value;
      bool advanced = false;
      for (Child& ch : children(s)) {
        double rest = 0.0;
        if (all_done(ch.state)) {
          if (limits_.require_preemption && !ch.state.preempted) continue;
        } else {
          const auto jt = memo_.find(key(ch.state));
          if (jt == memo_.end() || !jt->second.exact) continue;
          rest = jt->second.value;
        }
        if (std::abs(ch.cost + rest - target) <= 1e-12 * std::max(1.0, target)) {
          out.push_back(ch.action);
          s = ch.state;
          advanced = true;
          break;
        }
      }
      if (!advanced) throw RuntimeFailure("exact search: cannot rebuild the optimal path");
    }
  }

  const std::vector<CspRequest>& reqs_;
  const CspOptions& options_;
  const SolveLimits& limits_;
  const CostMode& cost_;
  Tokens quantum_;
  std::size_t w_;
  double per_batch_ = 0.0;
  double per_token_ = 0.0;
  std::vector<std::size_t> group_;
  std::chrono::steady_clock::time_point deadline_;

  std::unordered_map<std::vector<std::int64_t>, MemoEntry, KeyHash> memo_;
  std::vector<const Action*> path_;
  double path_cost_ = 0.0;

 public:
  std::uint64_t nodes_ = 0;
  bool aborted_ = false;
  double incumbent_ = kInf;
  std::vector<Action> incumbent_path_;
  bool have_path_ = false;
  std::optional<double> stop_at_;
  bool hit_target_ = false;
};

void check_caps(const Workload& workload, const SolveLimits& limits) {
  Tokens total_o = 0;
  for (const Request& r : workload) total_o += r.output_len;
  if (workload.empty()) throw ValidationError("exact search needs at least one request");
  if (workload.size() > limits.max_requests || total_o > limits.max_total_output) {
    throw ValidationError("instance too large for exact search (W = " + std::to_string(workload.size()) +
                          ", sum O = " + std::to_string(total_o) + "; caps W <= " +
                          std::to_string(limits.max_requests) + ", sum O <= " +
                          std::to_string(limits.max_total_output) +
                          "); export an LP file with `csp export` and use an external MILP solver");
  }
}

Tokens pick_quantum(const std::vector<CspRequest>& reqs, const SolveLimits& limits) {
  if (limits.chunk_quantum > 0) return limits.chunk_quantum;
  Tokens max_i = 1;
  for (const CspRequest& r : reqs) max_i = std::max(max_i, r.input_len);
  return static_cast<Tokens>(std::bit_ceil(static_cast<std::uint64_t>((max_i + 3) / 4)));
}

struct WarmStart {
  std::string name;
  ScheduleSolution solution;
};

std::optional<WarmStart> best_preset(const Workload& workload, const CostMode& cost, const CspOptions& options,
                                     const SolveLimits& limits) {
  std::optional<WarmStart> best;
  for (const std::string& name : standard_preset_variants()) {
    SchedulerConfig cfg = make_preset(name);
    cfg.hypothetical = true;
    cfg.token_limit = std::min(cfg.token_limit, options.token_limit);
    SimOptions sim;
    sim.kv_capacity = options.kv_capacity;
    sim.context_size = options.context_size;
    SimResult res;
    try {
      res = run(workload, cfg, cost, sim);
    } catch (const std::exception&) {
      continue; // preset cannot serve this instance
    }
    if (!verify_log(res.log, workload, {options.token_limit, options.kv_capacity}).empty()) continue;
    ScheduleSolution sol = log_to_solution(res.log, workload);
    if (limits.forbid_preemption && sol.preemptions() > 0) continue;
    if (limits.require_preemption && sol.preemptions() == 0) continue;
    if (!best || sol.objective < best->solution.objective) best = WarmStart{name, std::move(sol)};
  }
  return best;
}

ScheduleSolution path_to_solution(const std::vector<CspRequest>& reqs, const std::vector<Action>& path) {
  std::vector<std::vector<Tokens>> c;
  std::vector<std::vector<std::uint8_t>> e;
  for (const Action& a : path) {
    if (a.idle) continue;
    c.push_back(a.c);
    e.push_back(a.e);
  }
  // Rebuild s, m, g, u through the checker's replay rules.
  const std::size_t w = reqs.size();
  ScheduleSolution sol;
  const std::size_t jn = c.size();
  sol.c = std::move(c);
  sol.e = std::move(e);
  sol.s.assign(jn, std::vector<Tokens>(w));
  sol.m.assign(jn, std::vector<Tokens>(w));
  sol.g.assign(jn, std::vector<std::uint8_t>(w, 0));
  sol.u.assign(jn, 1);
  std::vector<Tokens> s(w), m(w, 0);
  for (std::size_t i = 0; i < w; ++i) s[i] = reqs[i].input_len;
  for (std::size_t j = 0; j < jn; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      const bool done = s[i] - reqs[i].input_len >= reqs[i].output_len;
      if (done || sol.e[j][i]) {
        m[i] = 0;
      } else {
        const Tokens avail = s[i] - m[i];
        m[i] += sol.c[j][i];
        if (sol.c[j][i] == avail) {
          ++s[i];
          sol.g[j][i] = 1;
        }
      }
      sol.s[j][i] = s[i];
      sol.m[j][i] = m[i];
    }
  }
  return sol;
}

Seconds makespan_of(const ScheduleSolution& sol, const Workload& workload, const CspOptions& options,
                    const CostMode& cost) {
  const ScheduleLog log = solution_to_log(sol, workload, options, cost);
  Seconds end = 0.0;
  for (const Batch& b : log.batches) end = std::max(end, b.start_time + b.duration);
  return end;
}

} // namespace

ScheduleSolution solve_exact(const Workload& workload, const CostMode& cost, const CspOptions& options,
                             const SolveLimits& limits) {
  check_caps(workload, limits);
  validate_workload(workload, options.context_size);
  if (limits.forbid_preemption && limits.require_preemption) {
    throw ValidationError("cannot both forbid and require preemption");
  }
  const auto reqs = csp_requests(workload);
  for (const CspRequest& r : reqs) {
    if (r.input_len + r.output_len - 1 > options.kv_capacity) {
      throw ValidationError("a request's peak KV demand exceeds M; no schedule exists");
    }
  }
  const Tokens quantum = pick_quantum(reqs, limits);
  Search search(reqs, options, limits, cost, quantum);

  std::optional<WarmStart> warm;
  if (limits.warm_start) warm = best_preset(workload, cost, options, limits);
  double budget = kInf;
  if (warm) budget = std::nextafter(warm->solution.objective, kInf);
  search.go(search.root(), budget);

  ScheduleSolution out;
  if (search.have_path_) {
    out = path_to_solution(reqs, search.incumbent_path_);
    out.objective = makespan_of(out, workload, options, cost);
  } else if (warm) {
    out = warm->solution;
    out.warm_start = warm->name;
  } else {
    out.status = SolveStatus::Infeasible;
    out.nodes = search.nodes_;
    out.chunk_quantum = quantum;
    out.exhaustive = !search.aborted_ && quantum == 1;
    if (search.aborted_) throw RuntimeFailure("exact search hit its limits before finding any schedule");
    return out;
  }
  out.nodes = search.nodes_;
  out.chunk_quantum = quantum;
  out.exhaustive = !search.aborted_ && quantum == 1;
  out.status = out.exhaustive ? SolveStatus::ProvedOptimal : SolveStatus::Feasible;
  return out;
}

bool existence_query(const Workload& workload, const CostMode& cost, const CspOptions& options,
                     Seconds latency_cap, const SolveLimits& limits) {
  check_caps(workload, limits);
  validate_workload(workload, options.context_size);
  const auto reqs = csp_requests(workload);
  for (const CspRequest& r : reqs) {
    if (r.input_len + r.output_len - 1 > options.kv_capacity) return false;
  }
  if (limits.warm_start) {
    if (auto warm = best_preset(workload, cost, options, limits); warm && warm->solution.objective <= latency_cap) {
      return true;
    }
  }
  const Tokens quantum = pick_quantum(reqs, limits);
  Search search(reqs, options, limits, cost, quantum);
  search.stop_at_ = latency_cap;
  search.go(search.root(), std::nextafter(latency_cap, kInf));
  if (search.hit_target_) return true;
  if (search.aborted_) throw RuntimeFailure("existence query hit its limits before an answer was known");
  if (quantum != 1) {
    // Coarse chunks may miss a schedule; fall back to full granularity.
    SolveLimits fine = limits;
    fine.chunk_quantum = 1;
    Search exact(reqs, options, fine, cost, 1);
    exact.stop_at_ = latency_cap;
    exact.go(exact.root(), std::nextafter(latency_cap, kInf));
    if (exact.hit_target_) return true;
    if (exact.aborted_) throw RuntimeFailure("existence query hit its limits before an answer was known");
  }
  return false;
}

} // namespace infersched
