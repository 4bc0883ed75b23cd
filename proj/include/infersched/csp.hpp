#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "infersched/core.hpp"
#include "infersched/costmodel.hpp"

namespace infersched {

struct CspRequest {
  Tokens input_len = 1;
  Tokens output_len = 1;
  Seconds arrival = 0.0;
};

std::vector<CspRequest> csp_requests(const Workload& workload);

struct CspOptions {
  Tokens token_limit = 4096;    // C
  Tokens kv_capacity = 100000;  // M
  Tokens context_size = 4096;   // S
  // Adds "objective <= cap" for existence queries.
  std::optional<Seconds> latency_cap;
};

// Linear stand-in for the batch-time model used by the LP objective.
struct LinearSurrogate {
  double gamma = 0.0; // per nonempty batch
  double alpha = 0.0; // per processed token
  double beta = 0.0;  // per cached token read by a generating entry
};

// Calibrated: bias, sum_c and sum_m_decode coefficients. Theoretical:
// finite differences of the roofline time around small batches.
LinearSurrogate linear_surrogate(const CostMode& mode);

enum class VarType { Continuous, Integer, Binary };
enum class Sense { Le, Ge, Eq };

struct LpVariable {
  std::string name;
  VarType type = VarType::Continuous;
  double lower = 0.0;
  double upper = 0.0;
};

struct LpTerm {
  std::size_t var = 0;
  double coef = 0.0;
};

struct LpConstraint {
  std::string name;
  std::vector<LpTerm> terms;
  Sense sense = Sense::Le;
  double rhs = 0.0;
};

struct CspInstance {
  std::vector<CspRequest> requests;
  std::size_t horizon = 0; // J_max
  CspOptions options;
  LinearSurrogate surrogate;
  double big_m = 0.0;      // token-valued constant
  double time_big_m = 0.0; // seconds-valued constant, online only
  bool online = false;     // some request arrives after 0

  std::vector<LpVariable> variables;
  std::vector<LpConstraint> constraints;
  std::vector<LpTerm> objective;

  // Throws ValidationError for an unknown name.
  [[nodiscard]] std::size_t var(const std::string& name) const;
  [[nodiscard]] std::optional<std::size_t> find_var(const std::string& name) const;

 private:
  friend CspInstance build_instance(const std::vector<CspRequest>&, const LinearSurrogate&,
                                    std::size_t, const CspOptions&);
  std::vector<std::pair<std::string, std::size_t>> sorted_names_;
};

// Σ ceil(I/C) + max O.
std::size_t minimal_horizon(const std::vector<CspRequest>& requests, Tokens token_limit);
// Σ ceil(I/C) + Σ O + W.
std::size_t default_horizon(const std::vector<CspRequest>& requests, Tokens token_limit);

// Throws ValidationError when horizon < minimal_horizon or a request cannot fit.
CspInstance build_instance(const std::vector<CspRequest>& requests, const LinearSurrogate& surrogate,
                           std::size_t horizon, const CspOptions& options);

// CPLEX LP text. Byte-identical output for identical instances.
void write_lp(std::ostream& out, const CspInstance& instance);
// Throws RuntimeFailure when the file cannot be written.
void export_lp(const CspInstance& instance, const std::string& path);

// Names of constraints violated by a full assignment (tolerance 1e-6, scaled).
std::vector<std::string> violated_constraints(const CspInstance& instance,
                                              const std::vector<double>& values);
double objective_value(const CspInstance& instance, const std::vector<double>& values);

enum class SolveStatus { ProvedOptimal, Feasible, Infeasible };
const char* to_string(SolveStatus status);

// Per-batch decision arrays, indexed [batch][request]; batch 0 here is B_1.
struct ScheduleSolution {
  SolveStatus status = SolveStatus::Infeasible;
  Seconds objective = 0.0; // makespan under the cost model
  std::vector<std::vector<Tokens>> s, m, c;
  std::vector<std::vector<std::uint8_t>> g, e;
  std::vector<std::uint8_t> u;

  // Search bookkeeping; zero for imported solutions.
  std::uint64_t nodes = 0;
  Tokens chunk_quantum = 1;
  bool exhaustive = false; // full chunk granularity and search finished
  std::string warm_start;  // preset that seeded the incumbent, if any

  [[nodiscard]] std::size_t num_batches() const { return c.size(); }
  [[nodiscard]] std::size_t preemptions() const;
};

struct SolveLimits {
  std::size_t max_requests = 6;
  Tokens max_total_output = 32;
  std::uint64_t max_nodes = 50'000'000;
  double time_limit_s = 120.0;
  // 0 picks bit_ceil(ceil(max I / 4)); 1 explores every chunk size.
  Tokens chunk_quantum = 0;
  bool forbid_preemption = false;
  bool require_preemption = false;
  bool warm_start = true;
};

// Throws ValidationError when the caps are exceeded; the message points at LP export.
ScheduleSolution solve_exact(const Workload& workload, const CostMode& cost, const CspOptions& options,
                             const SolveLimits& limits = {});

// True iff some schedule finishes within `latency_cap`. Throws RuntimeFailure
// when the limits run out before the answer is known.
bool existence_query(const Workload& workload, const CostMode& cost, const CspOptions& options,
                     Seconds latency_cap, const SolveLimits& limits = {});

// Verbatim conditional checks of memory, token, generation, termination and
// batch rules; empty when the solution is a valid schedule.
std::vector<std::string> check_solution(const std::vector<CspRequest>& requests,
                                        const CspOptions& options, const ScheduleSolution& solution);

// Empty batches are dropped; preemptions attach to the next nonempty batch.
// Throws ValidationError when check_solution reports problems.
ScheduleLog solution_to_log(const ScheduleSolution& solution, const Workload& workload,
                            const CspOptions& options, const CostMode& cost);

// Replays a simulator log into decision arrays (status Feasible).
ScheduleSolution log_to_solution(const ScheduleLog& log, const Workload& workload);

// Values for every instance variable, deriving helpers (d, r, acc, ...) from
// the decisions; online clocks use the surrogate batch times. Throws
// ValidationError if the solution needs more batches than the horizon.
std::vector<double> solution_assignment(const CspInstance& instance, const ScheduleSolution& solution);

// Reads whitespace-separated `name value` pairs (comments start with #).
// Only s/m/c/g/e/u entries are used; values are rounded to integers.
ScheduleSolution read_solution_values(std::istream& in, const std::vector<CspRequest>& requests,
                                      std::size_t horizon, const std::string& source_name);

} // namespace infersched
