#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmlab/error.hpp"
#include "mmlab/simkernel.hpp"

using namespace mmlab;
using namespace mmlab::literals;

TEST_CASE("events fire in time order, ties in insertion order") {
  Engine eng(1);
  std::vector<std::string> order;
  auto rec = [&](std::string s) { return [&order, s] { order.push_back(s); }; };
  eng.schedule(30_ms, 0, "x", rec("c"));
  eng.schedule(10_ms, 0, "x", rec("a1"));
  eng.schedule(10_ms, 0, "x", rec("a2"));
  eng.schedule(20_ms, 0, "x", rec("b"));
  eng.schedule(10_ms, 0, "x", rec("a3"));
  auto s = eng.run(SimTime::sec(1));
  CHECK(order == std::vector<std::string>{"a1", "a2", "a3", "b", "c"});
  CHECK(s.events_executed == 5);
  CHECK(s.events_pending == 0);
}

TEST_CASE("ordering matches a sort-based reference on random schedules") {
  RandomStream rs(99, "kernel-order");
  for (int round = 0; round < 20; ++round) {
    Engine eng(1);
    std::vector<std::pair<std::int64_t, int>> expect;
    std::vector<int> got;
    for (int i = 0; i < 200; ++i) {
      const auto at = static_cast<std::int64_t>(rs.pick(50)) * 100;
      expect.push_back({at, i});
      eng.schedule(SimTime::us(at), 0, "e", [&got, i] { got.push_back(i); });
    }
    std::stable_sort(expect.begin(), expect.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    eng.run(SimTime::sec(1));
    std::vector<int> want;
    for (auto& e : expect) want.push_back(e.second);
    CHECK(got == want);
  }
}

TEST_CASE("events scheduled from actions at the current time run after earlier peers") {
  Engine eng(1);
  std::vector<int> order;
  eng.schedule(5_ms, 0, "a", [&] {
    order.push_back(1);
    eng.schedule_in(SimTime{}, 0, "c", [&] { order.push_back(3); });
  });
  eng.schedule(5_ms, 0, "b", [&] { order.push_back(2); });
  eng.run(1_s);
  CHECK(order == std::vector<int>{1, 2, 3});
}

TEST_CASE("scheduling in the past is rejected") {
  Engine eng(1);
  eng.schedule(10_ms, 0, "a", [] {});
  eng.run(10_ms);
  CHECK(eng.now() == 10_ms);
  try {
    eng.schedule(5_ms, 0, "late", [] {});
    FAIL("expected SchedulingInPast");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SchedulingInPast);
  }
}

TEST_CASE("run stops at the horizon and leaves later events pending") {
  Engine eng(1);
  int fired = 0;
  eng.schedule(1_s, 0, "a", [&] { ++fired; });
  eng.schedule(3_s, 0, "b", [&] { ++fired; });
  auto s = eng.run(2_s);
  CHECK(fired == 1);
  CHECK(s.events_pending == 1);
  CHECK(s.clock == 2_s);
  s = eng.run(5_s);
  CHECK(fired == 2);
}

TEST_CASE("cancelled events do not fire") {
  Engine eng(1);
  int fired = 0;
  auto h = eng.schedule(1_ms, 0, "a", [&] { ++fired; });
  CHECK(eng.cancel(h));
  CHECK_FALSE(eng.cancel(h));
  eng.run(1_s);
  CHECK(fired == 0);
}

TEST_CASE("random streams are keyed by seed and label") {
  RandomStream a(7, "walk/mn"), b(7, "walk/mn"), c(7, "walk/other"), d(8, "walk/mn");
  std::vector<double> va, vb, vc, vd;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.uniform01());
    vb.push_back(b.uniform01());
    vc.push_back(c.uniform01());
    vd.push_back(d.uniform01());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);
  for (double v : va) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("distribution draws have the expected means") {
  RandomStream rs(3, "dist");
  const int n = 200000;
  double exp_sum = 0, uni_sum = 0;
  for (int i = 0; i < n; ++i) {
    exp_sum += rs.draw(DistributionSpec::exponential(4.0));
    uni_sum += rs.draw(DistributionSpec::uniform(2.0, 6.0));
  }
  CHECK(exp_sum / n == doctest::Approx(4.0).epsilon(0.02));
  CHECK(uni_sum / n == doctest::Approx(4.0).epsilon(0.01));
  CHECK(rs.draw(DistributionSpec::constant(2.5)) == 2.5);
  CHECK_THROWS_AS(DistributionSpec::from_name("pareto", 1.0), Error);
  CHECK(DistributionSpec::from_name("exponential", 3.0).kind == DistributionKind::Exponential);
}

TEST_CASE("pick is uniform over its range") {
  RandomStream rs(5, "pick");
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40000; ++i) ++counts[rs.pick(4)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("trace lines are JSON objects with time, node, kind, detail") {
  std::ostringstream os;
  JsonlTrace trace(os);
  Engine eng(1);
  eng.set_trace(&trace, [](NodeId n) { return "n" + std::to_string(n); });
  eng.schedule(1500_us, 3, "arrive", [] {}, "uid=4 \"q\"");
  eng.run(1_s);
  CHECK(os.str() == "{\"t_us\":1500,\"node\":\"n3\",\"kind\":\"arrive\",\"detail\":\"uid=4 \\\"q\\\"\"}\n");
}

TEST_CASE("memory trace digests identical runs identically") {
  auto run = [](int extra) {
    MemoryTrace t(false);
    Engine eng(1);
    eng.set_trace(&t);
    for (int i = 0; i < 10 + extra; ++i) eng.schedule(SimTime::ms(i), 0, "tick", [] {});
    eng.run(1_s);
    return std::make_pair(t.digest(), t.count());
  };
  CHECK(run(0) == run(0));
  CHECK(run(0) != run(1));
}
