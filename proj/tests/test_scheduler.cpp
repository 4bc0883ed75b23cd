#include <algorithm>
#include <random>

#include "doctest.h"

#include "infersched/presets.hpp"
#include "infersched/scheduler.hpp"
#include "infersched/simulator.hpp"
#include "infersched/verify.hpp"
#include "test_util.hpp"

using namespace infersched;
using infersched::testing::make_request;
using infersched::testing::unit_cost;

namespace {

// r1 decoding since t=0, r2 waiting since t=1.
Workload decode_and_waiting() {
  Workload w{make_request("r1", 4, 8, 0.0), make_request("r2", 4, 8, 1.0)};
  w[0].phase = Phase::Decode;
  w[0].generated = 1;
  w[0].m = 4;
  w[0].reserved = 4;
  return w;
}

SimOptions with_m(Tokens m) {
  SimOptions o;
  o.kv_capacity = m;
  return o;
}

SchedulerConfig hypothetical(const std::string& name) {
  SchedulerConfig c = make_preset(name);
  c.hypothetical = true;
  return c;
}

} // namespace

TEST_CASE("group_requests") {
  const Workload w = decode_and_waiting();
  const auto vllm = group_requests({1}, {0}, w, make_preset("vllm"));
  CHECK(vllm == std::vector<std::vector<RequestIndex>>{{1}, {0}});
  const auto sarathi = group_requests({1}, {0}, w, make_preset("sarathi"));
  CHECK(sarathi == std::vector<std::vector<RequestIndex>>{{0}, {}, {1}});

  Workload ranked{make_request("a", 512, 1), make_request("b", 8, 1), make_request("c", 16, 1)};
  SchedulerConfig rank = make_preset("vllm-rank-i");
  const auto g = group_requests({0, 1, 2}, {}, ranked, rank);
  CHECK(g == std::vector<std::vector<RequestIndex>>{{1, 2, 0}});

  SchedulerConfig by_o = make_preset("vllm-rank-o");
  CHECK_THROWS_AS(group_requests({0}, {}, ranked, by_o), ValidationError);
  CHECK_THROWS_AS(by_o.validate(), ValidationError);
  by_o.hypothetical = true;
  CHECK_NOTHROW(by_o.validate());
}

TEST_CASE("can_allocate") {
  // 4 + 2 held, the third request would hold 3 of M = 8.
  CHECK(can_allocate(3, 6, 4096, 6, 3, 8) == AllocDecision::RejectMemory);
  CHECK(can_allocate(1, 512, 512, 0, 1, 100000) == AllocDecision::RejectTokenLimit);
  CHECK(can_allocate(1, 0, 1 << 30, 0, 1, 1 << 30) == AllocDecision::Admit);
}

TEST_CASE("chunk_prefill") {
  CHECK(chunk_prefill(1024, 512, true) == 512);
  CHECK(chunk_prefill(100, 512, true) == 100);
  CHECK(chunk_prefill(100, 512, false) == 100);
  CHECK(chunk_prefill(1024, 512, false) == 0);
}

TEST_CASE("select_victim") {
  const std::vector<VictimInfo> ms{{0, 4, 0.0, 1}, {1, 2, 0.0, 2}, {2, 7, 0.0, 3}};
  CHECK(select_victim(ReplacementPolicy::SRF, ms) == RequestIndex{1});
  const std::vector<VictimInfo> arrivals{{0, 1, 0.0, 1}, {1, 1, 5.0, 2}, {2, 1, 3.0, 3}};
  CHECK(select_victim(ReplacementPolicy::NRF, arrivals) == RequestIndex{1});
  const std::vector<VictimInfo> tie{{0, 2, 0.0, 1}, {1, 2, 5.0, 2}};
  CHECK(select_victim(ReplacementPolicy::SRF, tie) == RequestIndex{1});
  CHECK_FALSE(select_victim(ReplacementPolicy::PreemptionFree, ms).has_value());
  CHECK_FALSE(select_victim(ReplacementPolicy::NRF, {}).has_value());

  // SRF always takes an argmin of m.
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> m(0, 50);
  for (int k = 0; k < 200; ++k) {
    std::vector<VictimInfo> pool;
    for (RequestIndex i = 0; i < 1 + k % 9; ++i) pool.push_back({i, m(rng), static_cast<double>(m(rng)), i});
    const auto v = select_victim(ReplacementPolicy::SRF, pool);
    REQUIRE(v.has_value());
    const Tokens min_m = std::min_element(pool.begin(), pool.end(), [](auto& a, auto& b) { return a.m < b.m; })->m;
    CHECK(pool[*v].m == min_m);
  }
}

TEST_CASE("preempt keeps generated tokens") {
  Request r = make_request("r", 4, 8);
  r.generated = 2;
  r.m = 6;
  r.reserved = 6;
  r.phase = Phase::Decode;
  CHECK(preempt(r) == 6);
  CHECK(r.m == 0);
  CHECK(r.reserved == 0);
  CHECK(r.phase == Phase::Waiting);
  CHECK(r.preempt_count == 1);
  CHECK(tokens_available(r) == 6);

  Request fresh = make_request("f", 4, 8);
  fresh.phase = Phase::Prefill;
  fresh.reserved = 4;
  CHECK(preempt(fresh) == 0);
  CHECK(fresh.phase == Phase::Waiting);
}

TEST_CASE("a preempted request refills in one batch and then decodes") {
  // Peaks 5 + 5 > M = 6 force vLLM to evict the newer request mid-decode.
  const Workload w{make_request("a", 2, 4, 0.0), make_request("b", 2, 4, 0.0)};
  const SimResult res = run(w, make_preset("vllm"), unit_cost(), with_m(6));
  REQUIRE(res.log.preemption_events.size() >= 1);
  const PreemptionEvent ev = res.log.preemption_events.front();
  CHECK(ev.request == 1);
  CHECK(ev.m_discarded > 0);
  CHECK(verify_log(res.log, w, {4096, 6}).empty());

  // Entries of the victim after the event.
  std::vector<BatchEntry> after;
  for (const Batch& b : res.log.batches) {
    if (b.index < ev.batch_index) continue;
    for (const BatchEntry& e : b.entries) {
      if (e.request == ev.request) after.push_back(e);
    }
  }
  REQUIRE(after.size() >= 2);
  // Discarded KVs were I + generated - 1; the refill adds the last token back.
  CHECK(after[0].phase_at_batch == Phase::Prefill);
  CHECK(after[0].m_before == 0);
  CHECK(after[0].c == ev.m_discarded + 1);
  CHECK(after[0].generated_token);
  CHECK(after[1].phase_at_batch == Phase::Decode);
  CHECK(after[1].m_before == after[0].c);
  CHECK(res.final_state[1].generated == 4);
}

TEST_CASE("sarathi builds hybrid batches decode first") {
  const Workload w{make_request("r0", 4, 10, 0.0), make_request("r1", 1024, 2, 0.5)};
  const SimResult res = run(w, make_preset("sarathi"), unit_cost(), with_m(100000));
  REQUIRE(res.log.batches.size() >= 2);
  const Batch& b = res.log.batches[1];
  REQUIRE(b.entries.size() == 2);
  CHECK(b.entries[0].request == 0);
  CHECK(b.entries[0].phase_at_batch == Phase::Decode);
  CHECK(b.entries[1].request == 1);
  CHECK(b.entries[1].c == 511);
  CHECK(b.total_tokens() == 512);

  // 1024-token prompt on an otherwise idle Sarathi: two 512 chunks.
  const Workload lone{make_request("x", 1024, 1)};
  const SimResult chunks = run(lone, make_preset("sarathi"), unit_cost(), with_m(100000));
  REQUIRE(chunks.log.batches.size() == 2);
  CHECK(chunks.log.batches[0].entries[0].c == 512);
  CHECK(chunks.log.batches[1].entries[0].c == 512);
}

TEST_CASE("without hybrid batching decodes run alone") {
  const Workload w{make_request("r0", 4, 10, 0.0), make_request("r1", 64, 2, 0.5)};
  const SimResult res = run(w, make_preset("sarathi-nohy"), unit_cost(), with_m(100000));
  for (const Batch& b : res.log.batches) {
    const bool decode = b.entries.front().phase_at_batch == Phase::Decode;
    for (const BatchEntry& e : b.entries) CHECK((e.phase_at_batch == Phase::Decode) == decode);
  }
  CHECK(res.log.batches[1].entries.size() == 1);
  CHECK(res.log.batches[1].entries[0].phase_at_batch == Phase::Decode);
}

TEST_CASE("idle scheduler jumps to the next arrival") {
  const Workload w{make_request("late", 4, 2, 5.0)};
  const SimResult res = run(w, make_preset("vllm"), unit_cost(), with_m(100));
  REQUIRE_FALSE(res.log.batches.empty());
  CHECK(res.log.batches.front().start_time == 5.0);

  Scheduler s(make_preset("vllm"), 100);
  Workload none;
  CHECK(s.next_batch(none, 0).entries.empty());
}

TEST_CASE("scheduler config validation") {
  SchedulerConfig c;
  c.replacement_policy = ReplacementPolicy::PreemptionFree;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SchedulerConfig{};
  c.chunked_prefill = true;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SchedulerConfig{};
  c.token_limit = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(make_preset("vllm-pf").validate(), ValidationError);
  CHECK_NOTHROW(hypothetical("vllm-pf").validate());
  CHECK_NOTHROW(make_preset("orca").validate());
}

TEST_CASE("preset table") {
  struct Row {
    const char* name;
    InsertionPolicy p;
    bool hybrid, chunked;
    Tokens c;
  };
  const Row rows[] = {
      {"vllm", InsertionPolicy::PrefillFirst, false, false, 4096},
      {"sarathi", InsertionPolicy::DecodeFirst, true, true, 512},
      {"sarathi-cs", InsertionPolicy::DecodeFirst, true, true, 4096},
      {"sarathi-nocp", InsertionPolicy::DecodeFirst, true, false, 4096},
      {"vllm-hy", InsertionPolicy::PrefillFirst, true, false, 4096},
      {"sarathi-nohy", InsertionPolicy::DecodeFirst, false, false, 4096},
  };
  for (const Row& r : rows) {
    const SchedulerConfig c = make_preset(r.name);
    CHECK(c.insertion_policy == r.p);
    CHECK(c.hybrid_batching == r.hybrid);
    CHECK(c.chunked_prefill == r.chunked);
    CHECK(c.token_limit == r.c);
    CHECK(c.replacement_policy == ReplacementPolicy::NRF);
    CHECK(c.reservation_mode == ReservationMode::InputOnly);
  }
  const auto orca = make_preset("orca");
  CHECK(orca.reservation_mode == ReservationMode::FullContext);
  CHECK(orca.replacement_policy == ReplacementPolicy::PreemptionFree);

  const auto pf = make_preset("sarathi-pf");
  CHECK(pf.replacement_policy == ReplacementPolicy::PreemptionFree);
  CHECK(pf.reservation_mode == ReservationMode::PeakDemand);
  CHECK(make_preset("vllm-srf").replacement_policy == ReplacementPolicy::SRF);
  const auto hist = make_preset("vllm-srf-hist");
  CHECK(hist.replacement_policy == ReplacementPolicy::SRF);
  CHECK(hist.defer_with_histogram);
  CHECK(make_preset("sarathi-rank-i").insertion_policy == InsertionPolicy::RankByInput);
  CHECK(make_preset("vllm-rank-o").insertion_policy == InsertionPolicy::RankByOutput);
  CHECK_THROWS_AS(make_preset("vllm-fast"), ValidationError);
  CHECK_THROWS_AS(make_preset("vllmx"), ValidationError);
  CHECK(base_preset_names().size() == 7);
}

TEST_CASE("output histogram") {
  OutputHistogram h;
  CHECK(h.predict(100) == 256);
  for (int k = 0; k < 9; ++k) h.observe(100, 10);
  h.observe(100, 500);
  CHECK(h.bucket_of(64) == h.bucket_of(127));
  CHECK(h.bucket_of(64) != h.bucket_of(128));
  CHECK(h.predict(100) == 500);
  CHECK(h.bucket_count(h.bucket_of(100)) == 10);

  // Sparse bucket falls back to the global quantile.
  CHECK(h.predict(2000) == 500);
  OutputHistogram sparse;
  for (int k = 0; k < 3; ++k) sparse.observe(8, 40);
  CHECK(sparse.predict(8) == 256);

  Request cand = make_request("c", 100, 1);
  Request run1 = make_request("r", 100, 1);
  run1.m = 100;
  const std::vector<const Request*> running{&run1};
  CHECK_FALSE(should_defer(h, cand, running, Tokens{1} << 40));
  CHECK(should_defer(h, cand, running, 1000));
  CHECK_FALSE(should_defer(h, cand, {}, 1));
}

TEST_CASE("preemption-free presets never preempt and SRF keeps NRF admission order") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(1, 64);
  for (int trial = 0; trial < 40; ++trial) {
    Workload w;
    for (int k = 0; k < 12; ++k) w.push_back(make_request("r" + std::to_string(k), len(rng), len(rng), 0.5 * (k % 4)));
    Tokens peak = 0;
    for (const Request& r : w) peak = std::max(peak, peak_kv_demand(r));
    const Tokens m = peak + trial * 8;
    for (const char* name : {"vllm-pf", "sarathi-pf", "sarathi-cs-pf", "vllm-hy-pf"}) {
      const SimResult res = run(w, hypothetical(name), unit_cost(), with_m(m));
      CHECK(res.metrics.preemption_count == 0);
    }
    for (const char* base : {"vllm", "sarathi"}) {
      const SimResult nrf = run(w, make_preset(base), unit_cost(), with_m(m));
      const SimResult srf = run(w, make_preset(std::string(base) + "-srf"), unit_cost(), with_m(m));
      if (nrf.metrics.preemption_count != 0 || srf.metrics.preemption_count != 0) continue;
      auto first_admission = [](const ScheduleLog& log) {
        std::vector<RequestIndex> order;
        for (const Batch& b : log.batches) {
          for (const BatchEntry& e : b.entries) {
            if (std::find(order.begin(), order.end(), e.request) == order.end()) order.push_back(e.request);
          }
        }
        return order;
      };
      CHECK(first_admission(nrf.log) == first_admission(srf.log));
    }
  }
}
