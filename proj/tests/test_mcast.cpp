#include <doctest.h>

#include "mmlab/error.hpp"
#include "mmlab/mcast.hpp"
#include "oracle.hpp"

using namespace mmlab;
using namespace mmlab::literals;

namespace {

struct Rig {
  Topology topo;
  Engine eng{1};
  AddressTable table;
  Network net{eng, topo, table};
  mcast::MulticastRouting mr;
  explicit Rig(Topology t, mcast::Config cfg = {}) : topo(std::move(t)), mr(net, cfg) {}
};

// root - a - b - c, with d hanging off a and e off b
Topology chain() {
  Topology t;
  for (const char* n : {"root", "a", "b", "c", "d", "e"}) t.add_node(n, Role::Router);
  t.add_link(0, 1, 2_ms);
  t.add_link(1, 2, 3_ms);
  t.add_link(2, 3, 4_ms);
  t.add_link(1, 4, 5_ms);
  t.add_link(2, 5, 6_ms);
  return t;
}

// Branch set implied by the members: the union of their upstream paths, each
// of which must be a cheapest multicast path to the root.
std::set<mcast::BranchEdge> recount(const Topology& t, const mcast::MulticastTree& tree) {
  std::set<mcast::BranchEdge> out;
  for (NodeId m : tree.members) {
    const auto up = tree.upstream_path(m);
    CHECK(up.back() == tree.root);
    CHECK(oracle::walk_cost(t, up) == oracle::dist(t, m, tree.root, true));
    for (std::size_t i = 0; i + 1 < up.size(); ++i) out.insert({up[i], up[i + 1]});
  }
  return out;
}

}  // namespace

TEST_CASE("a graft is established hops x graft delay after the join") {
  Rig r(chain());
  const Address g = Address::group(1);
  const Address src = r.topo.node_address(0);
  CHECK(r.mr.join(g, 3, src) == 15_ms);  // c -> b -> a -> root: three new hops
  CHECK(r.mr.join(g, 5, src) == 15_ms);  // e -> b meets at b; b's own state is ready at 15 ms
  CHECK(r.mr.join(g, 4, src) == 15_ms);  // d -> a: one hop, but a's own state is ready at 15 ms
  CHECK(r.mr.join(g, 4, src) == 15_ms);  // idempotent
  r.eng.run(50_ms);
  CHECK(r.mr.join(g, 1, src) == 50_ms);  // a is already on the tree: no new hops
  CHECK(r.mr.is_member(g, 3, src));
}

TEST_CASE("leave prunes back to the nearest fork and matches a recount") {
  RandomStream rs(12, "mcast-prune");
  for (int round = 0; round < 40; ++round) {
    const std::size_t n = 4 + rs.pick(3);
    Rig r(oracle::random_topology(rs, n, false));
    const Address g = Address::group(2);
    const Address src = r.topo.node_address(0);
    std::set<NodeId> members;
    for (int step = 0; step < 12; ++step) {
      const NodeId m = static_cast<NodeId>(1 + rs.pick(n - 1));
      if (members.count(m)) {
        r.mr.leave(g, m, src);
        members.erase(m);
      } else {
        r.mr.join(g, m, src);
        members.insert(m);
      }
      const auto* tree = r.mr.tree(g, src);
      REQUIRE(tree);
      CHECK(tree->members == members);
      CHECK(tree->branches() == recount(r.topo, *tree));
    }
  }
}

TEST_CASE("leaving a group one is not in is an error") {
  Rig r(chain());
  try {
    r.mr.leave(Address::group(1), 3, r.topo.node_address(0));
    FAIL("expected NotAMember");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotAMember);
  }
}

TEST_CASE("copies arrive at each member after its tree path delay") {
  Rig r(chain());
  const Address g = Address::group(1);
  const Address src = r.topo.node_address(0);
  for (NodeId m : {3u, 4u, 5u}) r.mr.join(g, m, src);
  std::map<NodeId, SimTime> got;
  r.eng.schedule(100_ms, 0, "inject", [&] {
    Packet p;
    p.net_src = src;
    p.net_dst = g;
    CHECK(r.mr.deliver(p, [&](Packet&&, NodeId m) { got[m] = r.eng.now(); }, {}) == 3);
  });
  r.eng.run(1_s);
  for (NodeId m : {3u, 4u, 5u}) {
    CHECK(got.at(m).count() == 100000 + oracle::dist(r.topo, 0, m, true));
  }
}

TEST_CASE("packets passing the junction before the branch is ready are dropped") {
  Rig r(chain());
  const Address g = Address::group(1);
  const Address src = r.topo.node_address(0);
  r.mr.join(g, 1, src);  // root - a
  r.eng.run(100_ms);
  std::vector<std::pair<NodeId, SimTime>> got;
  std::vector<LossReason> drops;
  auto send_at = [&](SimTime at) {
    r.eng.schedule(at, 0, "inject", [&] {
      Packet p;
      p.net_src = src;
      p.net_dst = g;
      r.mr.deliver(p, [&](Packet&&, NodeId m) { got.emplace_back(m, r.eng.now()); },
                   [&](const Packet&, NodeId, LossReason why) { drops.push_back(why); });
    });
  };
  // c joins at 100 ms; b and c are new hops behind a, so the branch is ready at 110 ms.
  r.eng.schedule(100_ms, 3, "join", [&] { CHECK(r.mr.join(g, 3, src) == 110_ms); });
  send_at(105_ms);  // passes a at 108 ms: too early
  send_at(108_ms);  // passes a at 111 ms: replicated
  r.eng.run(1_s);
  CHECK(drops == std::vector<LossReason>{LossReason::BranchPending});
  std::map<NodeId, int> per;
  for (auto& [m, t] : got) ++per[m];
  CHECK(per[1] == 2);
  CHECK(per[3] == 1);
}

TEST_CASE("a packet already past the root reaches a member that joins before it passes the junction") {
  Rig r(chain(), mcast::Config{1_ms});
  const Address g = Address::group(1);
  const Address src = r.topo.node_address(0);
  r.mr.join(g, 3, src);  // root a b c
  r.eng.run(100_ms);
  std::map<NodeId, SimTime> got;
  r.eng.schedule(100_ms, 0, "inject", [&] {
    Packet p;
    p.net_src = src;
    p.net_dst = g;
    p.uid = 9;
    r.mr.deliver(p, [&](Packet&& q, NodeId m) {
      CHECK(q.uid == 9);
      got[m] = r.eng.now();
    }, {});
  });
  // e joins at 101 ms: one new hop to b, ready at 102 ms. The packet passes
  // b at 100 + 3 + 4 = 107 ms, so it must be copied toward e.
  r.eng.schedule(101_ms, 5, "join", [&] { r.mr.join(g, 5, src); });
  r.eng.run(1_s);
  REQUIRE(got.count(5));
  CHECK(got.at(5).count() == 100000 + oracle::dist(r.topo, 0, 5, true));
  CHECK(got.at(3).count() == 100000 + oracle::dist(r.topo, 0, 3, true));
}

TEST_CASE("without a tree the packet is dropped with NoTree") {
  Rig r(chain());
  std::optional<LossReason> why;
  Packet p;
  p.net_src = r.topo.node_address(0);
  p.net_dst = Address::group(4);
  CHECK(r.mr.deliver(p, [](Packet&&, NodeId) {}, [&](const Packet&, NodeId, LossReason w) { why = w; }) == 0);
  CHECK(why == LossReason::NoTree);
}

TEST_CASE("joins across unicast-only links are unreachable") {
  Topology t;
  t.add_node("root", Role::Router);
  t.add_node("x", Role::Router);
  t.add_link(0, 1, 1_ms, false);
  Rig r(std::move(t));
  try {
    r.mr.join(Address::group(1), 1, r.topo.node_address(0));
    FAIL("expected Unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Unreachable);
  }
}
