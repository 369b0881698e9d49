#include <doctest.h>

#include <algorithm>

#include "mmlab/error.hpp"
#include "mmlab/metrics.hpp"
#include "mmlab/simulation.hpp"
#include "testnet.hpp"

using namespace mmlab;
using namespace mmlab::literals;

namespace {

// Ledger with one stream of `n` packets to receiver 7; delays come from f(seq).
DeliveryLedger make_ledger(std::uint64_t n, const std::function<std::optional<SimTime>(std::uint64_t)>& f) {
  DeliveryLedger led;
  const StreamKey key{Address{1, 5, AddrKind::Home}, Address::group(1)};
  const auto s = led.add_stream(key, 0, 20_ms);
  for (std::uint64_t seq = 1; seq <= n; ++seq) {
    const SimTime sent = SimTime::ms(20 * static_cast<std::int64_t>(seq));
    led.count_emitted(s);
    led.expect(seq, 7, s, seq, sent);
    led.copy_sent(seq, 7);
    led.copy_ended(seq, 7);
    if (auto d = f(seq)) {
      led.delivered(seq, 7, sent + *d, key.source, {});
    } else {
      led.lost(seq, 7, LossReason::StaleBinding, sent);
    }
  }
  return led;
}

const StreamKey kKey{Address{1, 5, AddrKind::Home}, Address::group(1)};

}  // namespace

TEST_CASE("gaps are classified against the 100 and 300 ms thresholds") {
  CHECK(classify(0_ms) == DisturbanceClass::Tolerable);
  CHECK(classify(75_ms) == DisturbanceClass::Tolerable);
  CHECK(classify(SimTime::us(99999)) == DisturbanceClass::Tolerable);
  CHECK(classify(100_ms) == DisturbanceClass::Degraded);
  CHECK(classify(300_ms) == DisturbanceClass::Degraded);
  CHECK(classify(SimTime::us(300001)) == DisturbanceClass::Interrupt);
  CHECK(classify(301_ms) == DisturbanceClass::Interrupt);
  // monotone
  DisturbanceClass prev = DisturbanceClass::Tolerable;
  for (std::int64_t us = 0; us < 1000000; us += 997) {
    const auto c = classify(SimTime::us(us));
    CHECK(static_cast<int>(c) >= static_cast<int>(prev));
    prev = c;
  }
}

TEST_CASE("constant delay gives zero jitter") {
  const auto led = make_ledger(50, [](std::uint64_t) { return std::optional<SimTime>(25_ms); });
  const auto s = stream_stats(led, kKey, 7);
  CHECK(s.jitter == SimTime{});
  CHECK(s.mean_delay == 25_ms);
  CHECK(s.max_gap == SimTime{});
  CHECK(s.delivered == 50);
}

TEST_CASE("alternating 20/30 ms delays give 10 ms jitter") {
  const auto led = make_ledger(40, [](std::uint64_t seq) { return std::optional<SimTime>(seq % 2 ? 20_ms : 30_ms); });
  const auto s = stream_stats(led, kKey, 7);
  CHECK(s.jitter == 10_ms);
  CHECK(s.mean_delay == 25_ms);
  CHECK(s.max_delay == 30_ms);
}

TEST_CASE("losses are counted and stretch the longest gap") {
  const auto led = make_ledger(100, [](std::uint64_t seq) {
    return (seq >= 40 && seq < 43) ? std::nullopt : std::optional<SimTime>(10_ms);
  });
  const auto s = stream_stats(led, kKey, 7);
  CHECK(s.emitted == 100);
  CHECK(s.delivered == 97);
  CHECK(s.lost == 3);
  CHECK(s.delivered + s.lost == s.emitted);
  CHECK(s.max_gap == 60_ms);  // four intervals between 39 and 43, minus the nominal one
  CHECK(led.audit().ok);
  CHECK(led.audit().lost == 3);
}

TEST_CASE("unknown streams and receivers are reported") {
  const auto led = make_ledger(3, [](std::uint64_t) { return std::optional<SimTime>(1_ms); });
  CHECK(testnet::code_of([&] { stream_stats(led, {Address{9, 9, AddrKind::Home}, Address::group(1)}, 7); }) ==
        Errc::UnknownStream);
  CHECK(testnet::code_of([&] { stream_stats(led, kKey, 8); }) == Errc::UnknownStream);
}

TEST_CASE("the audit flags entries that vanish without a reason") {
  DeliveryLedger led;
  const auto s = led.add_stream(kKey, 0, 20_ms);
  led.expect(1, 7, s, 1, 0_ms);
  led.expect(2, 7, s, 2, 0_ms);
  led.copy_sent(1, 7);
  led.copy_sent(2, 7);
  led.copy_ended(2, 7);
  auto a = led.audit();
  CHECK(a.ok == false);
  CHECK(a.in_flight == 1);
  CHECK(a.unaccounted == 1);
  led.lost(2, 7, LossReason::LinkDown, 1_ms);
  a = led.audit();
  CHECK(a.ok);
  led.copy_ended(2, 7);  // ending a copy twice underflows
  CHECK_FALSE(led.audit().ok);
}

TEST_CASE("duplicates are counted once and never re-delivered") {
  DeliveryLedger led;
  const auto s = led.add_stream(kKey, 0, 20_ms);
  led.expect(1, 7, s, 1, 0_ms);
  CHECK(led.delivered(1, 7, 5_ms, kKey.source, {}));
  CHECK_FALSE(led.delivered(1, 7, 6_ms, kKey.source, {}));
  CHECK(led.find(1, 7)->duplicates == 1);
  CHECK(led.find(1, 7)->delivered_at == 5_ms);

  SeqWindow w(8);
  CHECK(w.accept(5));
  CHECK_FALSE(w.accept(5));
  CHECK(w.accept(3));
  CHECK(w.accept(20));
  CHECK_FALSE(w.accept(11));  // older than the window
  CHECK(w.accept(13));
}

TEST_CASE("percentiles use nearest rank") {
  std::vector<SimTime> v;
  for (int i = 10; i >= 1; --i) v.push_back(SimTime::ms(i));
  CHECK(percentile(v, 50) == 5_ms);
  CHECK(percentile(v, 90) == 9_ms);
  CHECK(percentile(v, 91) == 10_ms);
  CHECK(percentile(v, 100) == 10_ms);
  CHECK(percentile(v, 0) == 1_ms);
  CHECK(percentile({}, 50) == SimTime{});
}

TEST_CASE("the handover report partitions moves by kind") {
  std::vector<HandoverRecord> recs;
  for (int i = 0; i < 12; ++i) {
    HandoverRecord h;
    h.kind = HandoverKind::IntraMap;
    h.completed = true;
    h.gap_excl_l2 = SimTime::ms(50 + i);
    h.local_signaling_msgs = 1;
    recs.push_back(h);
  }
  auto r = handover_report(recs);
  CHECK(r.total_moves == 12);
  CHECK(r.per_kind[HandoverKind::IntraMap] == 12);
  CHECK(r.per_kind[HandoverKind::InterMap] == 0);
  CHECK(r.global_handovers == 0);
  CHECK(r.local_signaling == 12);
  CHECK(r.gaps[HandoverKind::IntraMap].p50 == 55_ms);
  CHECK(r.gaps[HandoverKind::IntraMap].classes[0] == 12);

  HandoverRecord inter;
  inter.kind = HandoverKind::InterMap;
  inter.completed = false;  // cut short: counted, but no gap sample
  inter.global_signaling_msgs = 1;
  recs.push_back(inter);
  r = handover_report(recs);
  CHECK(r.global_handovers == 1);
  CHECK(r.global_ratio == doctest::Approx(1.0 / 13.0));
  CHECK(r.gaps.count(HandoverKind::InterMap) == 0);
  const auto j = to_json(r);
  CHECK(j["counts"]["inter_map"] == 1);
  CHECK(j["gaps"]["intra_map"]["tolerable"] == 12);
}

TEST_CASE("simulated records keep the excluded gap within the inclusive one") {
  Topology t = testnet::two_domains();
  SimConfig cfg;
  cfg.duration = 20_s;
  cfg.traffic.push_back(testnet::cbr(t.id("S"), 1, 20_s));
  cfg.listeners.push_back({t.id("mn"), Address::group(1)});
  std::vector<MovementStep> steps;
  const char* tour[] = {"s2", "s3", "s4", "s5", "s1", "s3", "s2", "s4"};
  for (int i = 0; i < 8; ++i) steps.push_back({SimTime::ms(1000 + 2000 * i), *t.find_subnet(tour[i])});
  cfg.movement.push_back(scripted_path(t.id("mn"), *t.find_subnet("s1"), steps));
  Simulation sim(t, cfg);
  const RunResult r = sim.run();
  CHECK(r.audit.ok);
  REQUIRE(r.handovers.size() == 8);
  for (const auto& h : r.handovers) {
    CHECK(h.completed);
    CHECK(h.gap_excl_l2 <= h.gap_incl_l2);
    CHECK(h.l2_start < h.l2_end);
    CHECK(h.l2_end <= h.phase_complete);
    CHECK(h.phase_complete <= h.l3_complete);
  }
  const auto s = stream_stats(sim.ledger(), {t.node_address(t.id("S")), Address::group(1)}, t.id("mn"));
  CHECK(s.delivered + s.lost + s.in_flight == s.emitted);
  CHECK(s.lost > 0);
}
