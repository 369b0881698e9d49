#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "mmlab/mip6.hpp"
#include "mmlab/simulation.hpp"
#include "oracle.hpp"
#include "testnet.hpp"

using namespace mmlab;
using namespace mmlab::literals;

namespace {

struct BtRun {
  Topology topo;
  NodeId mn, ha, s, l;
  SubnetId s1, s2, s3;
  std::unique_ptr<Simulation> sim;

  explicit BtRun(testnet::Options o = {}, bool mobile_sender = false) : topo(testnet::two_domains(o)) {
    mn = topo.id("mn");
    ha = topo.id("ha");
    s = topo.id("S");
    l = topo.id("L");
    s1 = *topo.find_subnet("s1");
    s2 = *topo.find_subnet("s2");
    s3 = *topo.find_subnet("s3");
    SimConfig cfg;
    cfg.protocol = Protocol::Mip6Bt;
    cfg.duration = 4_s;
    cfg.traffic.push_back(testnet::cbr(s, 1, 4_s));
    cfg.listeners.push_back({mn, Address::group(1)});
    if (mobile_sender) {
      cfg.traffic.push_back(testnet::cbr(mn, 2, 4_s));
      cfg.listeners.push_back({l, Address::group(2)});
    }
    cfg.movement.push_back(scripted_path(mn, s1, {{1_s, s2}, {2_s, s3}, {3_s, s1}}));
    sim = std::make_unique<Simulation>(topo, cfg);
  }

  // One-way MN <-> HA transit with the MN on access router `ar`.
  std::int64_t mn_ha(const char* ar) const { return oracle::access_hop(topo) + oracle::dist(topo, topo.id(ar), ha); }
};

}  // namespace

TEST_CASE("binding cache creates, moves and refreshes entries") {
  mip6::BindingCache bc(3);
  const Address home{1, 5, AddrKind::Home};
  CHECK(bc.update(home, {4, 2, AddrKind::CareOf}, 10_s) == mip6::BindingCache::Update::Created);
  CHECK(bc.update(home, {4, 2, AddrKind::CareOf}, 20_s) == mip6::BindingCache::Update::Refreshed);
  CHECK(bc.size() == 1);
  CHECK(bc.find(home)->lifetime_expires == 20_s);
  CHECK(bc.update(home, {6, 2, AddrKind::CareOf}, 30_s) == mip6::BindingCache::Update::Moved);
  CHECK(bc.lookup(home, 29_s)->care_of == Address{6, 2, AddrKind::CareOf});
  CHECK(bc.lookup(home, 30_s) == nullptr);  // expired entries never forward
  CHECK(bc.find(home) != nullptr);
  CHECK(bc.find(home)->holder == 3u);
  CHECK(bc.lookup({1, 9, AddrKind::Home}, 0_s) == nullptr);
}

TEST_CASE("handoff phases follow the fixed order") {
  mip6::HandoffPhase ph;
  CHECK(ph.can_communicate());
  CHECK_THROWS_AS(ph.advance(mip6::Phase::AddrConfig, 1_ms), std::logic_error);
  ph.advance(mip6::Phase::L2Handoff, 1_ms);
  CHECK_FALSE(ph.can_communicate());
  CHECK_THROWS_AS(ph.advance(mip6::Phase::Complete, 2_ms), std::logic_error);
  ph.advance(mip6::Phase::AddrConfig, 2_ms);
  CHECK_FALSE(ph.can_communicate());
  ph.advance(mip6::Phase::BindingUpdatePending, 3_ms);
  CHECK_FALSE(ph.can_communicate());
  ph.advance(mip6::Phase::L2Handoff, 4_ms);  // a new move restarts the sequence
  ph.advance(mip6::Phase::AddrConfig, 5_ms);
  ph.advance(mip6::Phase::BindingUpdatePending, 6_ms);
  ph.advance(mip6::Phase::Complete, 7_ms);
  CHECK(ph.can_communicate());
  CHECK(ph.entered_at == 7_ms);
}

TEST_CASE("the handover completes one HA round trip after the address is ready") {
  BtRun r;
  r.sim->run_until(990_ms);
  const Address first_coa = r.sim->care_of(r.mn);
  CHECK(r.sim->configure_coa(r.mn, r.s1) == first_coa);  // same subnet, same address
  r.sim->run_until(1040_ms);
  CHECK(r.sim->phase(r.mn) == mip6::Phase::L2Handoff);
  r.sim->run_until(1060_ms);
  CHECK(r.sim->phase(r.mn) == mip6::Phase::AddrConfig);
  r.sim->run_until(1085_ms);
  CHECK(r.sim->phase(r.mn) == mip6::Phase::BindingUpdatePending);
  CHECK(r.sim->care_of(r.mn).subnet == r.s2);
  const RunResult res = r.sim->run();
  REQUIRE(res.handovers.size() == 3);
  const HandoverRecord& h = res.handovers[0];
  CHECK(h.kind == HandoverKind::FlatMip6);
  CHECK(h.l2_end == 1050_ms);
  CHECK(h.addr_ready == 1080_ms);
  const std::int64_t rtt = 2 * r.mn_ha("ar2");
  CHECK(h.phase_complete.count() == h.addr_ready.count() + rtt + 1000);
  CHECK(h.completed);
  CHECK(h.gap_incl_l2.count() >= (50_ms + 30_ms).count() + rtt);
  CHECK(h.global_signaling_msgs == 1);
  CHECK(res.audit.ok);
}

TEST_CASE("after completion the home agent points at the newest care-of address") {
  BtRun r;
  for (SimTime t : {1500_ms, 2500_ms, 3500_ms}) {
    r.sim->run_until(t);
    CHECK(r.sim->phase(r.mn) == mip6::Phase::Complete);
    const auto* e = r.sim->cache(r.ha)->lookup(r.sim->home_address(r.mn), t);
    REQUIRE(e);
    CHECK(e->care_of == r.sim->care_of(r.mn));
  }
}

TEST_CASE("every group packet reaching the mobile went through the home agent") {
  BtRun r;
  const RunResult res = r.sim->run();
  const auto& led = r.sim->ledger();
  std::size_t delivered = 0, stale = 0;
  for (const PacketOutcome& o : led.entries()) {
    if (o.receiver != r.mn) continue;
    if (o.reason == LossReason::StaleBinding) ++stale;
    if (!o.delivered) continue;
    ++delivered;
    CHECK(std::find(o.via.begin(), o.via.end(), r.ha) != o.via.end());
    // Triangular routing is never faster than the native path to the current access router.
    const HandoverRecord* h = nullptr;
    for (const auto& rec : res.handovers) {
      if (rec.l2_start <= o.delivered_at) h = &rec;
    }
    const NodeId ar = r.topo.subnet_node(h ? h->to_subnet : r.s1);
    const std::int64_t native = oracle::dist(r.topo, r.s, ar) + oracle::access_hop(r.topo);
    const std::int64_t via_ha = oracle::dist(r.topo, r.s, r.ha) + oracle::dist(r.topo, r.ha, ar) + oracle::access_hop(r.topo);
    CHECK(o.delay().count() >= native);
    CHECK(o.delay().count() == via_ha);
  }
  CHECK(delivered > 100);
  CHECK(stale > 0);  // copies tunneled to the old address during the handover
}

TEST_CASE("a longer home agent path inflates delivery delay") {
  BtRun near_ha, far_ha(testnet::Options{60000});
  near_ha.sim->run();
  far_ha.sim->run();
  auto first_delay = [](const BtRun& r) {
    for (const PacketOutcome& o : r.sim->ledger().entries()) {
      if (o.receiver == r.mn && o.delivered) return o.delay().count();
    }
    return std::int64_t{-1};
  };
  CHECK(first_delay(far_ha) - first_delay(near_ha) == 2 * (60000 - 2000));
}

TEST_CASE("a mobile sender's packets carry its home address as source") {
  BtRun r({}, true);
  const RunResult res = r.sim->run();
  CHECK(res.audit.ok);
  std::size_t n = 0;
  for (const PacketOutcome& o : r.sim->ledger().entries()) {
    if (o.receiver != r.l || !o.delivered) continue;
    ++n;
    CHECK(o.app_source == r.sim->home_address(r.mn));
    CHECK(std::find(o.via.begin(), o.via.end(), r.ha) != o.via.end());
  }
  CHECK(n > 100);
}

TEST_CASE("binding updates to a node without a binding role are refused") {
  BtRun r;
  r.sim->setup();
  CHECK(testnet::code_of([&] { r.sim->send_binding_update(r.mn, r.s); }) == Errc::BindingRefused);
  CHECK(testnet::code_of([&] { r.sim->send_binding_update(r.mn, r.topo.id("mA")); }) == Errc::BindingRefused);
  const std::string before = r.sim->cache(r.ha)->digest();
  r.sim->send_binding_update(r.mn, r.ha);  // identical binding: lifetime refresh only
  r.sim->run_until(500_ms);
  const auto* e = r.sim->cache(r.ha)->find(r.sim->home_address(r.mn));
  REQUIRE(e);
  CHECK(e->care_of == r.sim->care_of(r.mn));
  CHECK(r.sim->cache(r.ha)->size() == 1);
  CHECK(r.sim->cache(r.ha)->digest() != before);  // expiry moved forward
}

TEST_CASE("two mobiles on one subnet get distinct addresses") {
  testnet::Options o;
  o.second_mobile = true;
  Topology t = testnet::two_domains(o);
  SimConfig cfg;
  cfg.protocol = Protocol::Mip6Bt;
  Simulation sim(t, cfg);
  sim.setup();
  const Address a = sim.care_of(t.id("mn")), b = sim.care_of(t.id("mn2"));
  CHECK(a.subnet == b.subnet);
  CHECK(a.host != b.host);
  CHECK_FALSE(sim.home_address(t.id("mn")) == sim.home_address(t.id("mn2")));
}
