#pragma once

#include <deque>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "mmlab/network.hpp"

namespace mmlab::mcast {

struct Config {
  SimTime graft_per_hop = SimTime::ms(5);
};

struct BranchEdge {
  NodeId router;
  NodeId parent;
  auto operator<=>(const BranchEdge&) const = default;
};

/// Source-specific distribution tree for one (group, source address).
struct MulticastTree {
  Address group;
  Address source_addr;
  NodeId root = kNoNode;
  std::map<NodeId, NodeId> parent;      // on-tree node -> upstream neighbor
  std::map<NodeId, SimTime> ready_at;   // when the node's upstream state is usable
  std::map<NodeId, SimTime> branch_established_at;  // member -> time
  std::map<NodeId, NodeId> junction;                // member -> node its branch met the tree at
  std::set<NodeId> members;

  bool on_tree(NodeId n) const { return n == root || parent.count(n) > 0; }
  std::set<BranchEdge> branches() const;
  /// member -> ... -> root along parent pointers.
  std::vector<NodeId> upstream_path(NodeId member) const;
};

/// Group membership and source-specific trees. Branches are grafted hop by hop
/// from the member toward the source along the reverse unicast shortest path
/// (multicast-capable links only) until they meet the existing tree; a branch
/// is usable graft_per_hop x new-hops after the join. A packet is copied onto a
/// branch when it passes the branch's junction after the branch is usable, so
/// packets already in flight upstream of the junction reach a new member.
class MulticastRouting {
 public:
  using Arrival = std::function<void(Packet&&, NodeId member)>;
  using Drop = std::function<void(const Packet&, NodeId at, LossReason)>;
  /// Returns the receivers a copy heading to `member` will serve.
  using TargetsFor = std::function<std::vector<NodeId>(NodeId member, const Packet&)>;

  MulticastRouting(Network& net, Config cfg);

  /// Grafts member onto the (group, source) tree; returns the time the branch
  /// is established. Idempotent. Throws Unreachable.
  SimTime join(const Address& group, NodeId member, const Address& source);
  /// Removes member and prunes back to the nearest fork. Throws NotAMember.
  void leave(const Address& group, NodeId member, const Address& source);
  void remove_tree(const Address& group, const Address& source);

  bool is_member(const Address& group, NodeId member, const Address& source) const;
  const MulticastTree* tree(const Address& group, const Address& source) const;
  std::vector<Address> trees_for(const Address& group) const;

  /// Injects p (net_dst = group, net_src = tree source) at the tree root.
  /// One copy per member; each arrives at its own path delay. Copies that
  /// passed the member's junction before its branch was usable are dropped
  /// with BranchPending on arrival.
  /// Without a tree the packet is dropped with NoTree. Returns copies sent.
  std::size_t deliver(const Packet& p, const Arrival& on_arrival, const Drop& on_drop, const TargetsFor& targets = {});

  NodeId root_of(const Address& source) const { return net_.topology().subnet_node(source.subnet); }
  const Config& config() const { return cfg_; }
  std::string digest() const;

 private:
  using Key = std::pair<Address, Address>;
  struct Injection {
    Packet packet;
    SimTime at;
    Arrival on_arrival;
    Drop on_drop;
    TargetsFor targets;
    std::set<NodeId> served;
  };

  SimTime transit_to(const MulticastTree& t, NodeId node) const;
  void send_copy(const Key& key, Packet p, NodeId member, NodeId from, SimTime junction_at, const Arrival& on_arrival,
                 const Drop& on_drop);
  void catch_up(const Key& key, NodeId member, NodeId meet, SimTime established);

  Network& net_;
  Config cfg_;
  std::map<Key, MulticastTree> trees_;
  std::map<Key, std::deque<Injection>> recent_;
  SimTime horizon_;  // bound on any root-to-node transit
};

}  // namespace mmlab::mcast
