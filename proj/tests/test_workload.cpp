#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "infersched/serialize.hpp"
#include "infersched/workload.hpp"

using namespace infersched;

TEST_CASE("gen_fixed") {
  const Workload w = gen_fixed(1024, 1024, 1024);
  CHECK(w.size() == 1024);
  for (const Request& r : w) {
    CHECK(r.arrival_time == 0.0);
    CHECK(r.input_len == 1024);
    CHECK(r.output_len == 1024);
  }
  CHECK(gen_fixed(4096, 1, 1).size() == 1);
  CHECK_THROWS_AS(gen_fixed(4096, 2, 1), ValidationError);
  CHECK_THROWS_AS(gen_fixed(4, 4, 0), ValidationError);
}

TEST_CASE("arrival modes") {
  Workload w = gen_fixed(4, 4, 5, {ArrivalKind::EvenlySpaced, 100.0, 0});
  CHECK(w.front().arrival_time == 0.0);
  CHECK(w.back().arrival_time == doctest::Approx(100.0));
  CHECK(w[1].arrival_time == doctest::Approx(25.0));

  const Workload u1 = gen_fixed(4, 4, 50, {ArrivalKind::UniformRandom, 100.0, 3});
  const Workload u2 = gen_fixed(4, 4, 50, {ArrivalKind::UniformRandom, 100.0, 3});
  for (std::size_t i = 0; i < u1.size(); ++i) {
    CHECK(u1[i].arrival_time == u2[i].arrival_time);
    CHECK(u1[i].arrival_time >= 0.0);
    CHECK(u1[i].arrival_time <= 100.0);
  }
}

TEST_CASE("gen_hetero") {
  const std::set<Tokens> small{8, 16}, large{512, 1024};
  const Workload w = gen_hetero({HeteroGroup::LILO, HeteroGroup::SILO}, 4, 1);
  REQUIRE(w.size() == 4);
  int lilo = 0, silo = 0;
  for (const Request& r : w) {
    CHECK(large.count(r.output_len) == 1);
    if (large.count(r.input_len)) ++lilo;
    if (small.count(r.input_len)) ++silo;
  }
  CHECK(lilo == 2);
  CHECK(silo == 2);

  const Workload again = gen_hetero({HeteroGroup::LILO, HeteroGroup::SILO}, 4, 1);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i].input_len == again[i].input_len);
    CHECK(w[i].output_len == again[i].output_len);
    CHECK(w[i].id == again[i].id);
  }

  const Workload mix = gen_hetero({HeteroGroup::LISO, HeteroGroup::SILO}, 200, 7);
  int liso = 0;
  for (const Request& r : mix) {
    if (large.count(r.input_len)) {
      ++liso;
      CHECK(small.count(r.output_len) == 1);
    }
  }
  CHECK(liso == 100);

  CHECK_THROWS_AS(gen_hetero({HeteroGroup::LILO}, 4, 1), ValidationError);
  CHECK_THROWS_AS(gen_hetero({HeteroGroup::LILO, HeteroGroup::LILO}, 4, 1), ValidationError);
  CHECK_THROWS_AS(gen_hetero({HeteroGroup::LILO, HeteroGroup::SISO}, 3, 1), ValidationError);
}

TEST_CASE("trace parsing") {
  std::istringstream in("request_id,arrival_s,input_tokens,output_tokens\n"
                        "9,20,10,10\n"
                        "7,12.5,70,215\n");
  const Workload w = parse_trace(in, "t.csv");
  REQUIRE(w.size() == 2);
  CHECK(w[0].id == "7");
  CHECK(w[0].arrival_time == 12.5);
  CHECK(w[0].input_len == 70);
  CHECK(w[0].output_len == 215);
  CHECK(w[1].id == "9");

  std::istringstream bad("request_id,arrival_s,input_tokens,output_tokens\n1,0,5,5\n2,x,5,5\n");
  try {
    parse_trace(bad, "bad.csv");
    FAIL("expected a parse error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.csv") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
  std::istringstream header("id,t,i,o\n");
  CHECK_THROWS_AS(parse_trace(header, "h.csv"), ValidationError);
  CHECK_THROWS_AS(load_trace("/nonexistent/trace.csv"), ValidationError);
}

TEST_CASE("scale") {
  Workload w;
  Request r;
  r.id = "a";
  r.input_len = 70;
  r.output_len = 215;
  r.arrival_time = 3.0;
  w.push_back(r);
  r.id = "b";
  r.input_len = 4000;
  r.output_len = 60;
  w.push_back(r);
  const ScaleResult s = scale(w, 2.0);
  CHECK(s.workload.size() == 2);
  CHECK(s.workload[0].output_len == 430);
  CHECK(s.workload[0].arrival_time == 3.0);
  CHECK(s.workload[1].output_len == 97);
  CHECK(s.clamped == 1);
  CHECK(scale(w, 0.5).workload[0].output_len == 108);
  CHECK_THROWS_AS(scale(w, 0.0), ValidationError);
}

TEST_CASE("workload spec text and json round trip") {
  const WorkloadSpec f = parse_workload_spec("fixed:I=512,O=32,W=1024");
  CHECK(f.kind == WorkloadKind::FixedGrid);
  CHECK(f.input_len == 512);
  CHECK(f.output_len == 32);
  CHECK(f.count == 1024);
  const WorkloadSpec h = parse_workload_spec("hetero:groups=LILO+SILO,W=4,seed=1,arrival=even,T=50");
  CHECK(h.groups.size() == 2);
  CHECK(h.seed == 1);
  CHECK(h.arrival.kind == ArrivalKind::EvenlySpaced);
  CHECK(h.arrival.horizon == 50.0);

  for (const WorkloadSpec& spec : {f, h}) {
    const WorkloadSpec back = workload_spec_from_json(to_json(spec));
    CHECK(format_workload_spec(back) == format_workload_spec(spec));
    CHECK(format_workload_spec(parse_workload_spec(format_workload_spec(spec))) == format_workload_spec(spec));
  }
  CHECK_THROWS_AS(parse_workload_spec("fixed:I=4"), ValidationError);
  CHECK_THROWS_AS(parse_workload_spec("zipf:I=4,O=4,W=4"), ValidationError);
  CHECK_THROWS_AS(parse_workload_spec("fixed:I=4,O=4,W=4,bogus=1"), ValidationError);
}

TEST_CASE("build_workload from a trace with scaling") {
  const auto path = std::filesystem::temp_directory_path() / "infersched_trace_test.csv";
  {
    std::ofstream out(path);
    out << "request_id,arrival_s,input_tokens,output_tokens\n7,12.5,70,215\n";
  }
  const BuiltWorkload b = build_workload(parse_workload_spec("trace:path=" + path.string() + ",o_scale=2"));
  REQUIRE(b.workload.size() == 1);
  CHECK(b.workload[0].output_len == 430);
  CHECK(b.workload[0].arrival_time == 12.5);
  std::filesystem::remove(path);
}
