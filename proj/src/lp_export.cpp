#include <charconv>
#include <fstream>
#include <ostream>

#include "infersched/csp.hpp"

namespace infersched {

namespace {

std::string num(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw RuntimeFailure("LP export: cannot format number");
  return std::string(buf, end);
}

// Accumulates tokens and breaks lines before they get long.
class LineWriter {
 public:
  explicit LineWriter(std::ostream& out) : out_(out) {}

  void start(const std::string& head) {
    out_ << head;
    width_ = head.size();
  }
  void token(const std::string& t) {
    if (width_ + 1 + t.size() > kMaxWidth) {
      out_ << "\n   ";
      width_ = 3;
    }
    out_ << ' ' << t;
    width_ += 1 + t.size();
  }
  void end() {
    out_ << '\n';
    width_ = 0;
  }

 private:
  static constexpr std::size_t kMaxWidth = 100;
  std::ostream& out_;
  std::size_t width_ = 0;
};

void write_terms(LineWriter& lw, const CspInstance& inst, const std::vector<LpTerm>& terms) {
  bool first = true;
  for (const LpTerm& t : terms) {
    const double mag = t.coef < 0 ? -t.coef : t.coef;
    const std::string& name = inst.variables[t.var].name;
    if (first) {
      if (t.coef < 0) lw.token("-");
    } else {
      lw.token(t.coef < 0 ? "-" : "+");
    }
    if (mag != 1.0) lw.token(num(mag));
    lw.token(name);
    first = false;
  }
  if (first) lw.token("0 " + inst.variables.front().name);
}

const char* sense_text(Sense s) {
  switch (s) {
    case Sense::Le: return "<=";
    case Sense::Ge: return ">=";
    case Sense::Eq: return "=";
  }
  return "=";
}

} // namespace

void write_lp(std::ostream& out, const CspInstance& inst) {
  const LinearSurrogate& sg = inst.surrogate;
  out << "\\ LLM batch scheduling: " << inst.requests.size() << " requests, " << inst.horizon
      << " batches, C=" << inst.options.token_limit << " M=" << inst.options.kv_capacity
      << " S=" << inst.options.context_size << '\n';
  for (std::size_t i = 0; i < inst.requests.size(); ++i) {
    const CspRequest& r = inst.requests[i];
    out << "\\ request " << (i + 1) << ": I=" << r.input_len << " O=" << r.output_len << " T=" << num(r.arrival)
        << '\n';
  }
  out << "\\ big-M=" << num(inst.big_m);
  if (inst.online) out << " time big-M=" << num(inst.time_big_m);
  out << '\n';
  out << "\\ objective is a linear surrogate of the batch-time model:\n"
      << "\\   " << num(sg.gamma) << " per nonempty batch (u), " << num(sg.alpha)
      << " per processed token (c),\n"
      << "\\   " << num(sg.beta) << " per cached token read by a generating entry (r).\n"
      << "\\ surrogate gap: the quadratic prefill terms (c^2, m*c), the prefill context read\n"
      << "\\ and per-entry counts are left out, and r also charges prefill-completing entries,\n"
      << "\\ so LP optima can differ from the exact search, which prices batches with the full model.\n";
  if (inst.online) out << "\\ online: a_i_j gates arrivals, w_j is idle time, acc_j is the end of batch j.\n";

  LineWriter lw(out);
  out << "Minimize\n";
  lw.start(" obj:");
  write_terms(lw, inst, inst.objective);
  lw.end();

  out << "Subject To\n";
  for (const LpConstraint& con : inst.constraints) {
    lw.start(" " + con.name + ":");
    write_terms(lw, inst, con.terms);
    lw.token(sense_text(con.sense));
    lw.token(num(con.rhs));
    lw.end();
  }

  out << "Bounds\n";
  for (const LpVariable& v : inst.variables) {
    if (v.type == VarType::Binary) continue;
    out << ' ' << num(v.lower) << " <= " << v.name << " <= " << num(v.upper) << '\n';
  }

  out << "Generals\n";
  lw.start("");
  for (const LpVariable& v : inst.variables) {
    if (v.type == VarType::Integer) lw.token(v.name);
  }
  lw.end();

  out << "Binaries\n";
  lw.start("");
  for (const LpVariable& v : inst.variables) {
    if (v.type == VarType::Binary) lw.token(v.name);
  }
  lw.end();
  out << "End\n";
}

void export_lp(const CspInstance& instance, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open '" + path + "' for writing");
  write_lp(out, instance);
  out.flush();
  if (!out) throw RuntimeFailure("failed writing '" + path + "'");
}

} // namespace infersched
