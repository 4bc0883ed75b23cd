// infersched: command-line front end. Exit codes: 0 ok, 1 validation error,
// 2 runtime error.
#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "infersched/analysis.hpp"
#include "infersched/csp.hpp"
#include "infersched/experiment.hpp"
#include "infersched/presets.hpp"
#include "infersched/profiler.hpp"
#include "infersched/verify.hpp"

namespace fs = std::filesystem;
using namespace infersched;

namespace {

// ---- helpers ---------------------------------------------------------------

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Tokens to_tokens(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(what + ": '" + s + "' is not an integer");
}

double to_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(what + ": '" + s + "' is not a number");
}

// "1,8,64" or "1..1024" (powers of two from 1 to 1024), mixable.
std::vector<Tokens> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<Tokens> out;
  for (const std::string& item : split(text, ',')) {
    if (auto dots = item.find(".."); dots != std::string::npos) {
      const Tokens lo = to_tokens(item.substr(0, dots), what);
      const Tokens hi = to_tokens(item.substr(dots + 2), what);
      if (lo < 1 || hi < lo) throw ValidationError(what + ": bad range '" + item + "'");
      for (Tokens v = lo; v <= hi; v *= 2) out.push_back(v);
    } else {
      out.push_back(to_tokens(item, what));
    }
  }
  if (out.empty()) throw ValidationError(what + ": empty list");
  return out;
}

std::vector<double> parse_real_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const std::string& item : split(text, ',')) out.push_back(to_real(item, what));
  if (out.empty()) throw ValidationError(what + ": empty list");
  return out;
}

fs::path out_path(const ExperimentConfig& cfg, const std::string& file) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  return dir / file;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

void archive(const ExperimentConfig& cfg) { write_text(out_path(cfg, "config.json"), to_json(cfg).dump(2) + "\n"); }

Workload workload_of(const ExperimentConfig& cfg) {
  BuiltWorkload built = build_workload(cfg.workload, cfg.model.context_size);
  if (built.clamped > 0) {
    std::cerr << "note: " << built.clamped << " output lengths clamped to the context size\n";
  }
  return std::move(built.workload);
}

std::string fmt(double v) { return format_double(v); }

// ---- commands ----------------------------------------------------------------

int cmd_simulate(const ExperimentConfig& cfg) {
  const Workload workload = workload_of(cfg);
  const CostMode cost = make_cost_mode(cfg);
  SimOptions opt;
  opt.kv_capacity = cfg.kv_capacity;
  opt.context_size = cfg.model.context_size;
  opt.what_if = cfg.what_if;
  opt.model = cfg.model;
  opt.hw = cfg.hardware;
  const SimResult res = run(workload, cfg.scheduler, cost, opt);
  const auto violations = verify_log(res.log, workload, {cfg.scheduler.token_limit, res.kv_capacity});
  if (!violations.empty()) throw RuntimeFailure("schedule failed verification:\n" + describe(violations, 10));

  Json metrics = to_json(res.metrics);
  metrics["preset"] = cfg.preset;
  metrics["what_if"] = to_string(cfg.what_if);
  metrics["kv_capacity"] = res.kv_capacity;
  archive(cfg);
  write_text(out_path(cfg, "metrics.json"), metrics.dump(2) + "\n");
  std::ostringstream sched;
  write_schedule_csv(sched, res.log, workload);
  write_text(out_path(cfg, "schedule.csv"), sched.str());
  std::cout << cfg.preset << ": makespan " << fmt(res.metrics.makespan) << " s, mean TTFT "
            << fmt(res.metrics.ttft.mean) << " s, mean TPOT " << fmt(res.metrics.tpot.mean) << " s, preemptions "
            << res.metrics.preemption_count << ", batches " << res.metrics.num_batches << ", avg batch size "
            << fmt(res.metrics.avg_batch_size) << "\n";
  return 0;
}

struct Cell {
  std::string preset;
  Tokens input = 0, output = 0, count = 0, kv = 0;
  auto tie() const { return std::tie(preset, input, output, count, kv); }
  bool operator<(const Cell& o) const { return tie() < o.tie(); }
};

int cmd_sweep(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  const auto presets = p.at("presets").get<std::vector<std::string>>();
  const auto is = p.at("I").get<std::vector<Tokens>>();
  const auto os = p.at("O").get<std::vector<Tokens>>();
  const auto ws = p.at("W").get<std::vector<Tokens>>();
  const auto ms = p.at("M").get<std::vector<Tokens>>();
  const bool hypothetical = p.value("hypothetical", false);
  std::size_t jobs = p.value("jobs", std::size_t{0});
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());

  // Ordered and deduplicated.
  std::vector<Cell> cells;
  std::set<Cell> seen;
  for (const auto& name : presets) {
    make_preset(name); // reject unknown names before running anything
    for (Tokens m : ms)
      for (Tokens w : ws)
        for (Tokens o : os)
          for (Tokens i : is) {
            Cell c{name, i, o, w, m};
            if (seen.insert(c).second) cells.push_back(c);
          }
  }
  if (cells.empty()) throw ValidationError("sweep grid is empty");

  const CostMode cost = make_cost_mode(cfg);
  std::vector<std::string> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      const Cell& c = cells[k];
      std::ostringstream row;
      row << c.preset << ',' << c.input << ',' << c.output << ',' << c.count << ',' << c.kv << ',';
      try {
        SchedulerConfig sc = make_preset(c.preset);
        sc.hypothetical = hypothetical;
        if (p.contains("C")) sc.token_limit = p.at("C").get<Tokens>();
        if (c.input < 1 || c.output < 1 || c.count < 1) throw ValidationError("I, O and W must be >= 1");
        const Workload w = gen_fixed(c.input, c.output, static_cast<std::size_t>(c.count), cfg.workload.arrival,
                                     cfg.model.context_size);
        SimOptions opt;
        opt.kv_capacity = c.kv;
        opt.context_size = cfg.model.context_size;
        opt.what_if = cfg.what_if;
        opt.model = cfg.model;
        opt.hw = cfg.hardware;
        const SimResult res = run(w, sc, cost, opt);
        row << "ok";
        for (const auto& v : metrics_csv_values(res.metrics)) row << ',' << v;
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        row << "error: " << msg;
        for (std::size_t k2 = 0; k2 < metrics_csv_columns().size(); ++k2) row << ',';
      }
      rows[k] = row.str();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, cells.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "preset,I,O,W,M,status";
  for (const auto& col : metrics_csv_columns()) csv << ',' << col;
  csv << '\n';
  std::size_t failed = 0;
  for (const auto& r : rows) {
    csv << r << '\n';
    if (r.find(",error: ") != std::string::npos) ++failed;
  }
  archive(cfg);
  write_text(out_path(cfg, "sweep.csv"), csv.str());
  std::cout << cells.size() << " cells (" << failed << " failed) -> " << out_path(cfg, "sweep.csv").string() << "\n";
  return 0;
}

OpClass class_from_name(const std::string& name) {
  for (OpClass c : {OpClass::NonAttention, OpClass::PrefillAttention, OpClass::DecodeAttention}) {
    if (name == to_string(c)) return c;
  }
  throw ValidationError("unknown operator class '" + name +
                        "' (expected non_attention, prefill_attention or decode_attention)");
}

int cmd_profile_synth(const ExperimentConfig& cfg) {
  ProfilerConfig pc;
  pc.seed = cfg.seed;
  pc.samples_per_class = cfg.params.value("samples", pc.samples_per_class);
  pc.noise_sigma = cfg.params.value("noise", pc.noise_sigma);
  const auto profiles = synthesize_profiles(cfg.model, cfg.hardware, pc);
  archive(cfg);
  for (const ClassProfile& prof : profiles) {
    std::ostringstream csv;
    write_profile_csv(csv, prof.samples);
    const fs::path path = out_path(cfg, std::string(to_string(prof.op_class)) + ".csv");
    write_text(path, csv.str());
    std::cout << prof.samples.size() << " samples -> " << path.string() << "\n";
  }
  return 0;
}

int cmd_calibrate(const ExperimentConfig& cfg) {
  std::vector<ClassProfile> profiles;
  for (const auto& entry : cfg.params.at("profiles")) {
    const std::string path = entry.at("path").get<std::string>();
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open profile '" + path + "'");
    ClassProfile prof;
    prof.op_class = class_from_name(entry.at("class").get<std::string>());
    prof.samples = read_profile_csv(in, path);
    profiles.push_back(std::move(prof));
  }
  if (profiles.empty()) throw ValidationError("calibrate needs at least one --profile");
  const Calibration cal = calibrate(profiles);
  Json classes = Json::array();
  for (std::size_t k = 0; k < cal.classes.size(); ++k) {
    Json c = to_json(cal.class_models[k]);
    c["class"] = to_string(cal.classes[k]);
    c["samples"] = profiles[k].samples.size();
    classes.push_back(c);
    std::cout << to_string(cal.classes[k]) << ": R^2 = " << fmt(cal.class_models[k].r_squared) << "\n";
  }
  const Json model{{"classes", classes}, {"combined", to_json(cal.combined)}};
  archive(cfg);
  write_text(out_path(cfg, "model.json"), model.dump(2) + "\n");
  std::cout << "-> " << out_path(cfg, "model.json").string() << "\n";
  return 0;
}

CspOptions csp_options(const ExperimentConfig& cfg) {
  CspOptions o;
  o.token_limit = cfg.params.value("C", o.token_limit);
  o.kv_capacity = cfg.kv_capacity;
  o.context_size = cfg.model.context_size;
  if (cfg.params.contains("latency_cap")) o.latency_cap = cfg.params.at("latency_cap").get<double>();
  return o;
}

SolveLimits solve_limits(const ExperimentConfig& cfg) {
  SolveLimits l;
  const Json& p = cfg.params;
  l.time_limit_s = p.value("time_limit", l.time_limit_s);
  l.max_nodes = p.value("max_nodes", l.max_nodes);
  l.chunk_quantum = p.value("chunk_quantum", l.chunk_quantum);
  l.forbid_preemption = p.value("forbid_preemption", false);
  l.require_preemption = p.value("require_preemption", false);
  return l;
}

Json solution_json(const ScheduleSolution& s) {
  return Json{{"status", to_string(s.status)},
              {"objective_s", s.objective},
              {"batches", s.num_batches()},
              {"preemptions", s.preemptions()},
              {"nodes", s.nodes},
              {"chunk_quantum", s.chunk_quantum},
              {"exhaustive", s.exhaustive},
              {"c", s.c},
              {"e", s.e}};
}

void write_schedule_outputs(const ExperimentConfig& cfg, const ScheduleLog& log, const Workload& workload) {
  std::ostringstream sched;
  write_schedule_csv(sched, log, workload);
  write_text(out_path(cfg, "schedule.csv"), sched.str());
  write_text(out_path(cfg, "metrics.json"), to_json(compute_metrics(log, workload)).dump(2) + "\n");
}

int cmd_csp(const ExperimentConfig& cfg) {
  const std::string sub = cfg.command.substr(4);
  const Workload workload = workload_of(cfg);
  const CostMode cost = make_cost_mode(cfg);
  const CspOptions opt = csp_options(cfg);
  const auto reqs = csp_requests(workload);

  if (sub == "export") {
    std::size_t horizon = cfg.params.value("horizon", std::size_t{0});
    if (horizon == 0) horizon = default_horizon(reqs, opt.token_limit);
    const CspInstance inst = build_instance(reqs, linear_surrogate(cost), horizon, opt);
    const std::string lp = cfg.params.value("lp", (fs::path(cfg.out_dir) / "instance.lp").string());
    if (fs::path(lp).has_parent_path()) fs::create_directories(fs::path(lp).parent_path());
    export_lp(inst, lp);
    archive(cfg);
    std::cout << inst.variables.size() << " variables, " << inst.constraints.size() << " constraints, horizon "
              << horizon << " -> " << lp << "\n";
    return 0;
  }

  if (sub == "solve") {
    const ScheduleSolution sol = solve_exact(workload, cost, opt, solve_limits(cfg));
    const ScheduleLog log = solution_to_log(sol, workload, opt, cost);
    const auto violations = verify_log(log, workload, {opt.token_limit, opt.kv_capacity});
    if (!violations.empty()) throw RuntimeFailure("solution failed verification:\n" + describe(violations, 10));
    Json out = solution_json(sol);
    std::cout << "optimum " << fmt(sol.objective) << " s (" << to_string(sol.status) << ", chunk quantum "
              << sol.chunk_quantum << "), " << sol.num_batches() << " batches, " << sol.preemptions()
              << " preemptions\n";
    if (cfg.params.value("compare_pf", false) && sol.preemptions() > 0) {
      SolveLimits pf = solve_limits(cfg);
      pf.forbid_preemption = true;
      pf.require_preemption = false;
      const ScheduleSolution best_pf = solve_exact(workload, cost, opt, pf);
      out["best_preemption_free_s"] = best_pf.objective;
      std::cout << "best preemption-free " << fmt(best_pf.objective) << " s\n";
    }
    archive(cfg);
    write_text(out_path(cfg, "solution.json"), out.dump(2) + "\n");
    write_schedule_outputs(cfg, log, workload);
    return 0;
  }

  if (sub == "check") {
    const std::string against = cfg.params.at("against").get<std::string>();
    const double factor = cfg.params.value("factor", 0.9);
    SchedulerConfig sc = make_preset(against);
    sc.hypothetical = true;
    SimOptions so;
    so.kv_capacity = opt.kv_capacity;
    so.context_size = opt.context_size;
    const SimResult base = run(workload, sc, cost, so);
    const double cap = factor * base.metrics.makespan;
    const bool exists = existence_query(workload, cost, opt, cap, solve_limits(cfg));
    archive(cfg);
    const Json out{{"against", against}, {"preset_latency_s", base.metrics.makespan}, {"factor", factor},
                   {"latency_cap_s", cap}, {"exists", exists}};
    write_text(out_path(cfg, "check.json"), out.dump(2) + "\n");
    std::cout << (exists ? "true" : "false") << "\n";
    return 0;
  }

  if (sub == "import") {
    const std::string path = cfg.params.at("values").get<std::string>();
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::size_t horizon = cfg.params.value("horizon", std::size_t{0});
    if (horizon == 0) horizon = default_horizon(reqs, opt.token_limit);
    const ScheduleSolution sol = read_solution_values(in, reqs, horizon, path);
    const ScheduleLog log = solution_to_log(sol, workload, opt, cost);
    const auto violations = verify_log(log, workload, {opt.token_limit, opt.kv_capacity});
    if (!violations.empty()) throw ValidationError("imported schedule is invalid:\n" + describe(violations, 10));
    archive(cfg);
    write_schedule_outputs(cfg, log, workload);
    const MetricsReport mr = compute_metrics(log, workload);
    std::cout << "valid schedule: " << log.batches.size() << " batches, " << log.preemption_events.size()
              << " preemptions, makespan " << fmt(mr.makespan) << " s\n";
    return 0;
  }
  throw ValidationError("unknown csp subcommand '" + sub + "'");
}

int cmd_analyze(const ExperimentConfig& cfg) {
  const std::string sub = cfg.command.substr(8);
  const Json& p = cfg.params;
  const CostMode cost = make_cost_mode(cfg);
  std::ostringstream csv;
  std::string file;

  if (sub == "roofline") {
    file = "roofline.csv";
    const auto op = p.at("op").get<std::string>();
    const auto cs = p.at("c").get<std::vector<Tokens>>();
    const auto ms = p.at("m").get<std::vector<Tokens>>();
    const auto b = p.value("B", std::int64_t{1});
    csv << "op,c,m,B,flops,bytes,intensity,element_intensity,boundness,latency_s\n";
    for (Tokens c : cs) {
      for (Tokens m : ms) {
        const RooflinePoint pt = roofline_point(op, c, m, b, cfg.model, cfg.hardware);
        csv << op << ',' << c << ',' << m << ',' << b << ',' << fmt(pt.cost.flops) << ',' << fmt(pt.cost.rw) << ','
            << fmt(pt.intensity) << ',' << fmt(pt.element_intensity) << ',' << to_string(pt.boundness) << ','
            << fmt(pt.latency) << '\n';
        std::cout << op << " c=" << c << " m=" << m << ": intensity " << fmt(pt.intensity) << " FLOP/B ("
                  << fmt(pt.element_intensity) << " per element), " << to_string(pt.boundness) << "\n";
      }
    }
  } else if (sub == "slo") {
    file = "slo.csv";
    const double tpot = p.at("tpot").get<double>();
    const Tokens np = p.value("prefill", Tokens{1});
    const Tokens nd = p.value("decode", Tokens{1});
    const Tokens c_limit = p.value("C", Tokens{4096});
    const SloCurve curve = slo_pareto(tpot, hybrid_time_fn(cost, np, nd), slo_default_grid(c_limit));
    csv << "c,m_max\n";
    for (const SloPoint& pt : curve.points) csv << pt.c << ',' << pt.m << '\n';
    std::cout << curve.points.size() << " Pareto points, status: " << curve.status << "\n";
  } else if (sub == "breakeven") {
    file = "breakeven.json";
    const RecomputeFn recompute = recompute_time_fn(cost);
    BreakEven be;
    double swap = cfg.model.kv_bytes_per_token() / cfg.hardware.pcie_bandwidth;
    if (p.contains("swap_per_token")) swap = p.at("swap_per_token").get<double>();
    be = swap_recompute_breakeven(recompute, swap, cfg.model.context_size);
    const Json out{{"status", to_string(be.status)}, {"n", be.n}, {"swap_s_per_token", swap},
                   {"kv_bytes_per_token", cfg.model.kv_bytes_per_token()},
                   {"pcie_bandwidth", cfg.hardware.pcie_bandwidth}};
    csv << out.dump(2) << '\n';
    std::cout << "break-even: " << to_string(be.status);
    if (be.status == BreakEvenStatus::Crossover) std::cout << " at N = " << be.n;
    std::cout << " (swap " << fmt(swap) << " s/token)\n";
  } else if (sub == "fiverule") {
    file = "fiverule.csv";
    const Tokens kv = cfg.kv_capacity;
    csv << "n,recompute_s_per_token,interval_s\n";
    if (p.contains("per_token")) {
      for (double t : p.at("per_token").get<std::vector<double>>()) {
        const double interval = five_minute_interval(1, t, kv);
        csv << 1 << ',' << fmt(t) << ',' << fmt(interval) << '\n';
        std::cout << "per-token " << fmt(t) << " s -> interval " << fmt(interval) << " s\n";
      }
    } else {
      const RecomputeFn recompute = recompute_time_fn(cost);
      for (Tokens n : p.at("n").get<std::vector<Tokens>>()) {
        const double t = recompute(n);
        const double interval = five_minute_interval(n, t, kv);
        csv << n << ',' << fmt(t / static_cast<double>(n)) << ',' << fmt(interval) << '\n';
        std::cout << "N=" << n << ": interval " << fmt(interval) << " s\n";
      }
    }
  } else {
    throw ValidationError("unknown analyze subcommand '" + sub + "'");
  }
  archive(cfg);
  write_text(out_path(cfg, file), csv.str());
  return 0;
}

int execute(const ExperimentConfig& cfg) {
  const std::string& c = cfg.command;
  if (c == "simulate") return cmd_simulate(cfg);
  if (c == "sweep") return cmd_sweep(cfg);
  if (c == "profile-synth") return cmd_profile_synth(cfg);
  if (c == "calibrate") return cmd_calibrate(cfg);
  if (c.rfind("csp ", 0) == 0) return cmd_csp(cfg);
  if (c.rfind("analyze ", 0) == 0) return cmd_analyze(cfg);
  throw ValidationError("unknown command '" + c + "'");
}

// ---- flag parsing ------------------------------------------------------------

struct Common {
  std::string hardware = "a100";
  std::string cost = "calibrated";
  std::string cost_model;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string kv = "";
  std::string what_if = "none";
};

void add_common(CLI::App* app, Common& c, bool with_kv = true) {
  app->add_option("--hardware", c.hardware, "Hardware preset: a100 or h100")->capture_default_str();
  app->add_option("--cost", c.cost, "Batch-time model: calibrated or theoretical")->capture_default_str();
  app->add_option("--cost-model", c.cost_model, "Calibrated model JSON (from `calibrate`)");
  app->add_option("--seed", c.seed, "Seed (falls back to INFERSCHED_SEED)");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  if (with_kv) app->add_option("--M", c.kv, "KV cache capacity in tokens (default: hardware preset)");
}

ExperimentConfig base_config(const std::string& command, const Common& c) {
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.hardware = hardware_preset(c.hardware);
  cfg.kv_capacity = cfg.hardware.kv_cache_capacity;
  if (!c.kv.empty() && c.kv != "auto") cfg.kv_capacity = to_tokens(c.kv, "--M");
  if (cfg.kv_capacity < 1) throw ValidationError("--M must be >= 1");
  cfg.cost = c.cost;
  if (cfg.cost != "calibrated" && cfg.cost != "theoretical") {
    throw ValidationError("--cost must be calibrated or theoretical");
  }
  if (!c.cost_model.empty()) {
    if (cfg.cost != "calibrated") throw ValidationError("--cost-model only applies to --cost calibrated");
    cfg.cost_model = load_cost_model(c.cost_model);
  } else if (cfg.cost == "calibrated") {
    cfg.cost_model = *default_calibrated_model();
  }
  cfg.what_if = parse_what_if(c.what_if);
  cfg.seed = resolve_seed(c.seed, 0);
  cfg.out_dir = c.out;
  return cfg;
}

WorkloadSpec workload_from_text(const std::string& text, std::uint64_t seed) {
  WorkloadSpec spec = parse_workload_spec(text);
  if (text.find("seed=") == std::string::npos) {
    spec.seed = seed;
    spec.arrival.seed = seed;
  }
  return spec;
}

// max(2I, I + O - 1) over the requests, the setting of the small CSP figures.
Tokens auto_kv(const Workload& w) {
  Tokens kv = 1;
  for (const Request& r : w) kv = std::max({kv, 2 * r.input_len, r.input_len + r.output_len - 1});
  return kv;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"infersched: LLM inference scheduling laboratory"};
  app.require_subcommand(0, 1);
  std::string config_path;
  app.add_option("--config", config_path, "Rerun an archived config.json");

  ExperimentConfig cfg;
  std::function<void()> finalize;

  // simulate
  Common sim_c;
  std::string sim_preset, sim_workload;
  bool sim_hypo = false;
  std::optional<Tokens> sim_c_limit;
  auto* sim = app.add_subcommand("simulate", "Run one scheduler preset on one workload");
  add_common(sim, sim_c);
  sim->add_option("--preset", sim_preset, "Scheduler preset, e.g. vllm, sarathi-pf")->required();
  sim->add_option("--workload", sim_workload, "fixed:I=..,O=..,W=.. | hetero:.. | trace:path=..")->required();
  sim->add_flag("--hypothetical", sim_hypo, "Allow policies that read true output lengths");
  sim->add_option("--what-if", sim_c.what_if, "none | infinite-m | theoretical")->capture_default_str();
  sim->add_option("--C", sim_c_limit, "Override the preset's token limit");
  sim->callback([&] {
    finalize = [&] {
      cfg = base_config("simulate", sim_c);
      cfg.preset = sim_preset;
      cfg.scheduler = make_preset(sim_preset);
      cfg.scheduler.hypothetical = sim_hypo;
      if (sim_c_limit) cfg.scheduler.token_limit = *sim_c_limit;
      cfg.scheduler.validate();
      cfg.workload = workload_from_text(sim_workload, cfg.seed);
    };
  });

  // sweep
  Common sw_c;
  std::string sw_presets, sw_i, sw_o, sw_w, sw_m = "100000", sw_arrival = "zero";
  std::size_t sw_jobs = 0;
  bool sw_hypo = false;
  std::optional<Tokens> sw_c_limit;
  auto* sw = app.add_subcommand("sweep", "Cartesian sweep over presets, I, O, W and M");
  add_common(sw, sw_c, false);
  sw->add_option("--presets", sw_presets, "Comma-separated presets")->required();
  sw->add_option("--I", sw_i, "Input lengths, e.g. 1..1024 or 1,8,64")->required();
  sw->add_option("--O", sw_o, "Output lengths")->required();
  sw->add_option("--W", sw_w, "Request counts")->required();
  sw->add_option("--M", sw_m, "KV capacities")->capture_default_str();
  sw->add_option("--arrival", sw_arrival, "zero | even | uniform")->capture_default_str();
  sw->add_option("--jobs", sw_jobs, "Parallel cells (0 = all cores)");
  sw->add_option("--C", sw_c_limit, "Override every preset's token limit");
  sw->add_option("--what-if", sw_c.what_if, "none | infinite-m | theoretical")->capture_default_str();
  sw->add_flag("--hypothetical", sw_hypo, "Allow policies that read true output lengths");
  sw->callback([&] {
    finalize = [&] {
      cfg = base_config("sweep", sw_c);
      cfg.workload.arrival.kind = parse_arrival_kind(sw_arrival);
      cfg.workload.arrival.seed = cfg.seed;
      Json& p = cfg.params;
      p["presets"] = split(sw_presets, ',');
      p["I"] = parse_int_list(sw_i, "--I");
      p["O"] = parse_int_list(sw_o, "--O");
      p["W"] = parse_int_list(sw_w, "--W");
      p["M"] = parse_int_list(sw_m, "--M");
      p["jobs"] = sw_jobs;
      p["hypothetical"] = sw_hypo;
      if (sw_c_limit) p["C"] = *sw_c_limit;
      if (p["presets"].empty()) throw ValidationError("--presets is empty");
    };
  });

  // profile-synth
  Common ps_c;
  std::size_t ps_samples = 400;
  double ps_noise = 0.02;
  auto* ps = app.add_subcommand("profile-synth", "Write synthetic per-class profiles as CSV");
  add_common(ps, ps_c, false);
  ps->add_option("--samples", ps_samples, "Samples per operator class")->capture_default_str();
  ps->add_option("--noise", ps_noise, "Multiplicative noise sigma")->capture_default_str();
  ps->callback([&] {
    finalize = [&] {
      cfg = base_config("profile-synth", ps_c);
      if (!ps_c.seed && !std::getenv("INFERSCHED_SEED")) cfg.seed = 42;
      cfg.params["samples"] = ps_samples;
      cfg.params["noise"] = ps_noise;
    };
  });

  // calibrate
  Common cal_c;
  std::vector<std::string> cal_profiles;
  auto* cal = app.add_subcommand("calibrate", "Fit the linear batch-time model to profile CSVs");
  add_common(cal, cal_c, false);
  cal->add_option("--profile", cal_profiles, "[class=]path; class defaults to the file stem")->required();
  cal->callback([&] {
    finalize = [&] {
      cfg = base_config("calibrate", cal_c);
      cfg.cost_model.reset();
      Json list = Json::array();
      for (const std::string& item : cal_profiles) {
        std::string cls, path = item;
        if (auto eq = item.find('='); eq != std::string::npos) {
          cls = item.substr(0, eq);
          path = item.substr(eq + 1);
        } else {
          cls = fs::path(path).stem().string();
        }
        class_from_name(cls);
        list.push_back({{"class", cls}, {"path", fs::absolute(path).string()}});
      }
      cfg.params["profiles"] = list;
    };
  });

  // csp
  Common csp_c;
  std::string csp_workload, csp_lp, csp_against = "vllm", csp_values;
  Tokens csp_limit = 4096;
  std::size_t csp_horizon = 0;
  double csp_factor = 0.9, csp_time = 120.0;
  std::optional<double> csp_cap;
  std::uint64_t csp_nodes = 50'000'000;
  Tokens csp_quantum = 0;
  bool csp_forbid = false, csp_require = false, csp_compare = false;
  auto* csp = app.add_subcommand("csp", "Optimal scheduling as a constraint problem");
  csp->require_subcommand(1);
  std::string csp_sub;
  for (const char* name : {"solve", "export", "check", "import"}) {
    auto* s = csp->add_subcommand(name, std::string(name) == "solve"    ? "Exact branch-and-bound optimum"
                                        : std::string(name) == "export" ? "Write a CPLEX LP file"
                                        : std::string(name) == "check"
                                            ? "Does a schedule beat a preset by a factor?"
                                            : "Turn a solver's `name value` file into a verified schedule");
    add_common(s, csp_c);
    s->add_option("--workload", csp_workload, "Workload spec")->required();
    s->add_option("--C", csp_limit, "Token limit")->capture_default_str();
    s->add_option("--horizon", csp_horizon, "Batches in the LP (0 = default)");
    s->add_option("--time-limit", csp_time, "Seconds")->capture_default_str();
    s->add_option("--max-nodes", csp_nodes, "Search node limit")->capture_default_str();
    s->add_option("--chunk-quantum", csp_quantum, "Chunk granularity (0 = auto, 1 = every size)");
    s->add_flag("--forbid-preemption", csp_forbid, "Only preemption-free schedules");
    s->add_flag("--require-preemption", csp_require, "Only schedules with a preemption");
    if (std::string(name) == "solve") s->add_flag("--compare-pf", csp_compare, "Also report the best PF schedule");
    if (std::string(name) == "export") {
      s->add_option("--lp", csp_lp, "LP file path (default <out>/instance.lp)");
      s->add_option("--latency-cap", csp_cap, "Add objective <= cap");
    }
    if (std::string(name) == "check") {
      s->add_option("--against", csp_against, "Preset to beat")->capture_default_str();
      s->add_option("--factor", csp_factor, "Fraction of the preset's latency")->capture_default_str();
    }
    if (std::string(name) == "import") s->add_option("--values", csp_values, "Solver output")->required();
    s->callback([&, s] {
      csp_sub = s->get_name();
      finalize = [&] {
        cfg = base_config("csp " + csp_sub, csp_c);
        cfg.workload = workload_from_text(csp_workload, cfg.seed);
        if (csp_c.kv == "auto") cfg.kv_capacity = auto_kv(build_workload(cfg.workload, cfg.model.context_size).workload);
        Json& p = cfg.params;
        p["C"] = csp_limit;
        p["horizon"] = csp_horizon;
        p["time_limit"] = csp_time;
        p["max_nodes"] = csp_nodes;
        p["chunk_quantum"] = csp_quantum;
        p["forbid_preemption"] = csp_forbid;
        p["require_preemption"] = csp_require;
        p["compare_pf"] = csp_compare;
        if (!csp_lp.empty()) p["lp"] = csp_lp;
        if (csp_cap) p["latency_cap"] = *csp_cap;
        p["against"] = csp_against;
        p["factor"] = csp_factor;
        if (!csp_values.empty()) p["values"] = fs::absolute(csp_values).string();
      };
    });
  }

  // analyze
  Common an_c;
  std::string an_op = "prefill-attn", an_cs = "4096", an_ms = "0", an_n = "1,100,10000", an_per_token;
  std::int64_t an_b = 1;
  double an_tpot = 0.1;
  Tokens an_prefill = 1, an_decode = 1, an_limit = 4096;
  std::optional<double> an_swap;
  auto* an = app.add_subcommand("analyze", "Roofline, SLO, break-even and five-minute-rule analyses");
  an->require_subcommand(1);
  std::string an_sub;
  auto* roof = an->add_subcommand("roofline", "Intensity and boundness of one operator");
  roof->add_option("--op", an_op, "prefill-attn | decode-attn | qkv-proj | o-proj | gate-up-proj | down-proj")
      ->capture_default_str();
  roof->add_option("--c", an_cs, "Token counts")->capture_default_str();
  roof->add_option("--m", an_ms, "Cached KV counts")->capture_default_str();
  roof->add_option("--B", an_b, "Requests")->capture_default_str();
  auto* slo = an->add_subcommand("slo", "Pareto (c, m) pairs under a TPOT threshold");
  slo->add_option("--tpot", an_tpot, "Threshold in seconds")->required();
  slo->add_option("--prefill", an_prefill, "Prefill requests sharing c")->capture_default_str();
  slo->add_option("--decode", an_decode, "Decode requests sharing m")->capture_default_str();
  slo->add_option("--C", an_limit, "Largest c")->capture_default_str();
  auto* be = an->add_subcommand("breakeven", "Swap versus recompute break-even");
  be->add_option("--swap-per-token", an_swap, "Override seconds per swapped token");
  auto* fr = an->add_subcommand("fiverule", "Break-even residency interval of cached KVs");
  fr->add_option("--n", an_n, "Recomputed token counts")->capture_default_str();
  fr->add_option("--per-token", an_per_token, "Explicit per-token recompute times instead of the model");
  for (auto* s : {roof, slo, be, fr}) {
    add_common(s, an_c);
    s->callback([&, s] {
      an_sub = s->get_name();
      finalize = [&] {
        cfg = base_config("analyze " + an_sub, an_c);
        Json& p = cfg.params;
        if (an_sub == "roofline") {
          p["op"] = an_op;
          p["c"] = parse_int_list(an_cs, "--c");
          p["m"] = parse_int_list(an_ms, "--m");
          p["B"] = an_b;
        } else if (an_sub == "slo") {
          if (!(an_tpot > 0)) throw ValidationError("--tpot must be > 0");
          p["tpot"] = an_tpot;
          p["prefill"] = an_prefill;
          p["decode"] = an_decode;
          p["C"] = an_limit;
        } else if (an_sub == "breakeven") {
          if (an_swap) p["swap_per_token"] = *an_swap;
        } else {
          if (!an_per_token.empty()) {
            p["per_token"] = parse_real_list(an_per_token, "--per-token");
          } else {
            p["n"] = parse_int_list(an_n, "--n");
          }
        }
      };
    });
  }

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return app.exit(e) == 0 ? 0 : 1;
    }
    if (!config_path.empty()) {
      if (finalize) throw ValidationError("--config cannot be combined with a subcommand");
      std::ifstream in(config_path);
      if (!in) throw ValidationError("cannot open '" + config_path + "'");
      Json j;
      try {
        j = Json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(config_path + ": " + e.what());
      }
      cfg = experiment_config_from_json(j);
    } else if (finalize) {
      finalize();
    } else {
      std::cout << app.help();
      return 1;
    }
    return execute(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
