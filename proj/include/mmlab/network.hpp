#pragma once

#include <functional>
#include <map>
#include <string_view>
#include <vector>

#include "mmlab/address.hpp"
#include "mmlab/packet.hpp"
#include "mmlab/simkernel.hpp"
#include "mmlab/topology.hpp"

namespace mmlab {

enum class LossReason : std::uint8_t {
  None,
  LinkDown,
  NoBinding,
  StaleBinding,
  BranchPending,
  NoTree,
  HandoffInProgress,
  MulticastUnaware,
  Pruned,
  Unreachable,
  TunnelDepthExceeded,
  Unaccounted,
};

std::string_view loss_reason_name(LossReason r);

struct Path {
  std::vector<NodeId> nodes;  // includes origin; size 1 for a local path
  SimTime link_delay;

  std::size_t hops() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  /// Link delays plus per-hop processing.
  SimTime transit(SimTime per_hop) const { return link_delay + per_hop * static_cast<std::int64_t>(hops()); }
};

/// Shortest-delay routing over the fixed graph. The cost of a hop is its
/// one-way link delay plus the per-hop processing delay, so the chosen route
/// is also the fastest one to traverse. Equal-cost ties pick the next hop
/// with the lexicographically smallest node id.
class Routing {
 public:
  explicit Routing(const Topology& topo) : topo_(topo) {}

  /// Route between fixed nodes; mcast_only restricts to multicast-capable links.
  Path route(NodeId from, NodeId to, bool mcast_only = false) const;
  /// Transit time (link delays + processing) of route(from, to).
  SimTime distance(NodeId from, NodeId to, bool mcast_only = false) const;

 private:
  struct Tree {
    std::vector<std::int64_t> dist;  // -1 unreachable
    std::vector<NodeId> next;
  };
  const Tree& tree_to(NodeId to, bool mcast_only) const;

  const Topology& topo_;
  mutable std::uint64_t cached_version_ = ~0ull;
  mutable std::map<std::pair<NodeId, bool>, Tree> cache_;
};

/// Unicast route from a node (fixed or attached mobile) to an address.
/// Addresses bound to a mobile node end with the access hop from the access
/// router of the address's subnet. Throws UnassignedAddress or Unreachable.
Path unicast_route(const Topology& topo, const Routing& routing, const AddressTable& table, NodeId from,
                   const Address& to);

/// Receives notifications for every packet copy entering or leaving the network.
class CopyObserver {
 public:
  virtual ~CopyObserver() = default;
  virtual void copy_sent(const Packet& p) = 0;
  virtual void copy_ended(const Packet& p) = 0;
};

/// Hop-by-hop forwarding over a Path with per-hop arrival events.
class Network {
 public:
  using Arrival = std::function<void(Packet&&, NodeId at)>;
  using Drop = std::function<void(const Packet&, NodeId at, LossReason)>;

  Network(Engine& engine, Topology& topo, AddressTable& table)
      : engine_(engine), topo_(topo), table_(table), routing_(topo) {}

  void set_observer(CopyObserver* obs) { observer_ = obs; }
  void set_default_drop(Drop d) { default_drop_ = std::move(d); }

  /// Schedules one arrival event per hop at cumulative (link delay + per-hop
  /// processing). A hop over a link that no longer exists drops the packet
  /// with LinkDown; an access hop to a mobile node that is no longer attached
  /// there, or no longer holds the destination address, drops it with
  /// StaleBinding. The final arrival hands the packet to on_arrival.
  void forward(Packet p, const Path& path, Arrival on_arrival, Drop on_drop = {});

  Path route(NodeId from, const Address& to) const { return unicast_route(topo_, routing_, table_, from, to); }

  Engine& engine() { return engine_; }
  Topology& topology() { return topo_; }
  const Routing& routing() const { return routing_; }
  AddressTable& addresses() { return table_; }
  SimTime per_hop() const { return topo_.processing_delay; }

 private:
  void hop(Packet p, std::vector<NodeId> nodes, std::size_t index, Arrival on_arrival, Drop on_drop);
  void drop(const Packet& p, NodeId at, LossReason why, const Drop& on_drop);

  Engine& engine_;
  Topology& topo_;
  AddressTable& table_;
  Routing routing_;
  CopyObserver* observer_ = nullptr;
  Drop default_drop_;
};

}  // namespace mmlab
