#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"

#include "infersched/presets.hpp"
#include "infersched/profiler.hpp"
#include "infersched/serialize.hpp"
#include "infersched/simulator.hpp"
#include "infersched/verify.hpp"
#include "infersched/workload.hpp"
#include "test_util.hpp"

using namespace infersched;
using infersched::testing::make_request;
using infersched::testing::unit_cost;

namespace {

SimOptions with_m(Tokens m) {
  SimOptions o;
  o.kv_capacity = m;
  return o;
}

CostMode calibrated() { return CalibratedCost{default_calibrated_model()}; }

std::size_t count_kind(const std::vector<Violation>& v, ViolationKind k) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; }));
}

} // namespace

TEST_CASE("single request under a unit-cost model") {
  const Workload w{make_request("r", 2, 3)};
  const SimResult res = run(w, make_preset("vllm"), unit_cost(), with_m(4));
  REQUIRE(res.log.batches.size() == 3);
  CHECK(res.log.batches[0].entries[0].phase_at_batch == Phase::Prefill);
  CHECK(res.log.batches[0].entries[0].c == 2);
  CHECK(res.log.batches[1].entries[0].phase_at_batch == Phase::Decode);
  CHECK(res.log.batches[2].entries[0].phase_at_batch == Phase::Decode);
  CHECK(res.metrics.ttft.mean == doctest::Approx(1.0));
  CHECK(res.metrics.tpot.mean == doctest::Approx(1.0));
  CHECK(res.metrics.makespan == doctest::Approx(3.0));
  CHECK(res.metrics.tps == doctest::Approx(1.0));
  CHECK(res.final_state[0].phase == Phase::Completed);
  // Peak KV is I + O - 1 = 4: fits M = 4 exactly.
  CHECK(verify_log(res.log, w, {4096, 4}).empty());
}

TEST_CASE("compute_metrics") {
  const Workload w{make_request("a", 1, 3), make_request("b", 1, 5), make_request("c", 1, 1)};
  const SimResult res = run(w, make_preset("vllm"), unit_cost(), with_m(100));
  CHECK(res.metrics.makespan == doctest::Approx(5.0));
  CHECK(res.metrics.requests[0].latency == doctest::Approx(3.0));
  CHECK(res.metrics.requests[1].latency == doctest::Approx(5.0));
  CHECK_FALSE(res.metrics.requests[2].tpot.has_value());
  CHECK(res.metrics.tpot.count == 2);
  CHECK(res.metrics.tps == doctest::Approx(9.0 / 5.0));

  ScheduleLog partial = res.log;
  partial.batches.pop_back();
  try {
    compute_metrics(partial, w);
    FAIL("expected an incomplete-log error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("aggregate uses nearest-rank percentiles") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  const Aggregate a = aggregate(v);
  CHECK(a.mean == doctest::Approx(50.5));
  CHECK(a.p50 == 50.0);
  CHECK(a.p99 == 99.0);
  CHECK(aggregate({}).count == 0);
}

TEST_CASE("verify_log catches injected faults") {
  const Workload w{make_request("r", 4, 2)};
  const SimResult res = run(w, make_preset("vllm"), unit_cost(), with_m(100));
  CHECK(verify_log(res.log, w, {4096, 100}).empty());
  // The 4-token prefill is one over a limit of 3.
  const auto tl = verify_log(res.log, w, {3, 100});
  CHECK(tl.size() == 1);
  CHECK(count_kind(tl, ViolationKind::TokenLimit) == 1);
  CHECK(count_kind(verify_log(res.log, w, {4096, 3}), ViolationKind::Memory) >= 1);

  ScheduleLog overlap = res.log;
  overlap.batches[1].start_time = overlap.batches[0].start_time;
  CHECK(count_kind(verify_log(overlap, w, {4096, 100}), ViolationKind::Timing) == 1);

  ScheduleLog short_log = res.log;
  short_log.batches.pop_back();
  CHECK(count_kind(verify_log(short_log, w, {4096, 100}), ViolationKind::Termination) == 1);
}

TEST_CASE("verify_log flags a partial refill that claims a token") {
  // I=2, O=3: prefill, decode, preempt (m=3), then a refill of 3 of the 4
  // needed tokens that nevertheless claims generation.
  const Workload w{make_request("r", 2, 3)};
  ScheduleLog log;
  log.batches.push_back({0, {{0, 2, 0, Phase::Prefill, true}}, 0.0, 1.0});
  log.batches.push_back({1, {{0, 1, 2, Phase::Decode, true}}, 1.0, 1.0});
  log.batches.push_back({2, {{0, 3, 0, Phase::Prefill, true}}, 2.0, 1.0});
  log.preemption_events.push_back({2, 0, 3});
  const auto v = verify_log(log, w, {4096, 100});
  CHECK(v.size() == 1);
  CHECK(count_kind(v, ViolationKind::Generation) == 1);

  log.batches[2].entries[0].c = 4;
  CHECK(verify_log(log, w, {4096, 100}).empty());
}

TEST_CASE("runs are deterministic") {
  const Workload w = gen_fixed(64, 32, 64, {ArrivalKind::UniformRandom, 1.0, 9});
  const SimResult a = run(w, make_preset("sarathi"), calibrated(), with_m(2000));
  const SimResult b = run(w, make_preset("sarathi"), calibrated(), with_m(2000));
  std::ostringstream sa, sb;
  write_schedule_csv(sa, a.log, w);
  write_schedule_csv(sb, b.log, w);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("batch,start_s,duration_s,request,phase,c,m_before,event\n", 0) == 0);
}

TEST_CASE("metric identities on random runs") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> len(1, 128);
  const auto presets = standard_preset_variants();
  for (int trial = 0; trial < 40; ++trial) {
    Workload w;
    for (int k = 0; k < 16; ++k) w.push_back(make_request("r" + std::to_string(k), len(rng), len(rng), 0.01 * (k % 5)));
    SchedulerConfig cfg = make_preset(presets[trial % presets.size()]);
    cfg.hypothetical = true;
    // Orca reserves the whole context per request.
    const Tokens m = cfg.reservation_mode == ReservationMode::FullContext ? 3 * 4096 : 260 + 40 * (trial % 10);
    const SimResult res = run(w, cfg, calibrated(), with_m(m));
    const MetricsReport& mr = res.metrics;
    Tokens discarded = 0;
    for (const auto& e : res.log.preemption_events) discarded += e.m_discarded;
    CHECK(mr.refilled_tokens == discarded);
    CHECK(mr.preemption_count == res.log.preemption_events.size());
    Tokens outputs = 0;
    for (const Request& r : w) outputs += r.output_len;
    CHECK(mr.tps == doctest::Approx(static_cast<double>(outputs) / mr.makespan));
    CHECK(mr.progress <= 1.0);
    CHECK(mr.progress > 0.0);
    for (const auto& r : mr.requests) CHECK(r.ttft >= 0.0);
    CHECK(mr.kv_usage_timeline.size() == res.log.batches.size());
    for (const auto& [t, kv] : mr.kv_usage_timeline) CHECK(kv <= m);
    for (std::size_t j = 1; j < res.log.batches.size(); ++j) {
      CHECK(res.log.batches[j].start_time > res.log.batches[j - 1].start_time);
    }
    CHECK(verify_log(res.log, w, {cfg.token_limit, m}).empty());
  }
}

TEST_CASE("infinite-M what-if removes preemption and never slows a run") {
  for (const char* name : {"vllm", "sarathi", "vllm-srf", "sarathi-nohy"}) {
    const Workload w = gen_fixed(128, 64, 64);
    SimOptions finite = with_m(1000);
    SimOptions infinite = finite;
    infinite.what_if = WhatIf::InfiniteM;
    const SimResult a = run(w, make_preset(name), calibrated(), finite);
    const SimResult b = run(w, make_preset(name), calibrated(), infinite);
    CHECK(a.metrics.preemption_count > 0);
    CHECK(b.metrics.preemption_count == 0);
    CHECK(b.metrics.makespan <= a.metrics.makespan);
  }
}

TEST_CASE("theoretical what-if prices batches with the roofline model") {
  const Workload w = gen_fixed(16, 4, 4);
  SimOptions o = with_m(1000);
  o.what_if = WhatIf::TheoreticalCost;
  const SimResult res = run(w, make_preset("vllm"), calibrated(), o);
  const Batch& b = res.log.batches.front();
  CHECK(b.duration == doctest::Approx(theoretical_batch_time(b.entries, ModelSpec{}, HardwareSpec{})));
}

TEST_CASE("no preemption at W = 32 with M = 100K") {
  for (const auto& name : standard_preset_variants()) {
    SchedulerConfig cfg = make_preset(name);
    cfg.hypothetical = true;
    for (Tokens i : {1, 1024}) {
      for (Tokens o : {1, 1024}) {
        const SimResult res = run(gen_fixed(i, o, 32), cfg, calibrated(), with_m(100000));
        CHECK(res.metrics.preemption_count == 0);
      }
    }
  }
}

TEST_CASE("latency grows with I and with O") {
  const std::vector<Tokens> grid{1, 4, 16, 64, 256, 1024};
  for (const char* name : {"vllm", "sarathi", "vllm-pf", "sarathi-pf"}) {
    SchedulerConfig cfg = make_preset(name);
    cfg.hypothetical = true;
    std::vector<std::vector<double>> lat(grid.size(), std::vector<double>(grid.size()));
    for (std::size_t a = 0; a < grid.size(); ++a) {
      for (std::size_t b = 0; b < grid.size(); ++b) {
        lat[a][b] = run(gen_fixed(grid[a], grid[b], 32), cfg, calibrated(), with_m(100000)).metrics.latency.mean;
      }
    }
    for (std::size_t a = 0; a < grid.size(); ++a) {
      for (std::size_t b = 0; b < grid.size(); ++b) {
        if (a > 0) CHECK(lat[a][b] >= lat[a - 1][b]);
        if (b > 0) CHECK(lat[a][b] >= lat[a][b - 1]);
      }
    }
  }
}

TEST_CASE("workloads that cannot run are rejected up front") {
  CHECK_THROWS_AS(run({make_request("x", 4096, 2)}, make_preset("vllm"), unit_cost(), with_m(100000)),
                  ValidationError);
  CHECK_THROWS_AS(run({make_request("x", 64, 64)}, make_preset("vllm"), unit_cost(), with_m(100)), ValidationError);
  CHECK_THROWS_AS(run({}, make_preset("vllm"), unit_cost(), with_m(100)), ValidationError);
}

TEST_CASE("metrics json and csv") {
  const SimResult res = run(gen_fixed(8, 4, 4), make_preset("vllm"), unit_cost(), with_m(100));
  const Json j = to_json(res.metrics);
  CHECK(j.at("makespan_s").get<double>() == doctest::Approx(res.metrics.makespan));
  CHECK(metrics_csv_columns().size() == metrics_csv_values(res.metrics).size());
  CHECK(format_double(0.1) == "0.1");
}
