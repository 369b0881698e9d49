#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmlab/address.hpp"
#include "mmlab/mcast.hpp"
#include "mmlab/metrics.hpp"
#include "mmlab/mhmip.hpp"
#include "mmlab/mip6.hpp"
#include "mmlab/network.hpp"
#include "mmlab/simkernel.hpp"
#include "mmlab/topology.hpp"
#include "mmlab/traffic.hpp"

namespace mmlab {

enum class Protocol { Mip6Bt, Hmip, MHmip };
std::string_view protocol_name(Protocol p);
std::optional<Protocol> protocol_from_name(std::string_view s);

struct Listener {
  NodeId node = kNoNode;
  Address group;
};

struct SimConfig {
  Protocol protocol = Protocol::MHmip;
  std::uint64_t seed = 1;
  SimTime duration = SimTime::sec(10);
  mip6::Timers timers;
  mcast::Config mcast;
  mhmip::Config mhmip;
  bool route_optimization = false;
  std::vector<NodeId> correspondents;
  std::vector<CbrSourceSpec> traffic;
  std::vector<MovementTrace> movement;
  std::vector<Listener> listeners;
};

/// Sliding duplicate filter over per-stream sequence numbers.
class SeqWindow {
 public:
  explicit SeqWindow(std::uint64_t width = 1024) : width_(width) {}
  /// True the first time seq is seen; false for repeats and for anything
  /// older than the window.
  bool accept(std::uint64_t seq);

 private:
  std::uint64_t width_;
  std::uint64_t highest_ = 0;
  bool any_ = false;
  std::set<std::uint64_t> seen_;
};

struct SignalingCounts {
  std::uint64_t global = 0;   // binding updates to HA and CNs
  std::uint64_t local = 0;    // binding updates to MAPs (local, reactive)
  std::uint64_t refresh = 0;  // lifetime refreshes
  std::uint64_t acks = 0;
};

struct RunResult {
  Protocol protocol = Protocol::MHmip;
  RunSummary summary;
  std::vector<HandoverRecord> handovers;
  AuditResult audit;
  FrequencyReport report;
  SignalingCounts signaling;
  std::uint64_t app_deliveries = 0;
  std::uint64_t app_duplicates_filtered = 0;
  std::uint64_t app_duplicates_passed = 0;  // must stay zero
};

/// One simulated network running one mobility protocol. Owns the engine,
/// topology, addressing, forwarding and multicast state plus the per-node
/// protocol agents (mobile nodes, home agents, MAPs, correspondents).
class Simulation {
 public:
  Simulation(Topology topo, SimConfig cfg, TraceSink* trace = nullptr);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Installs initial bindings, memberships, traffic and movement. Called by
  /// run() if not done yet.
  void setup();
  /// Runs to cfg.duration and collects results.
  RunResult run();
  /// Advances to `until` without collecting results.
  RunSummary run_until(SimTime until);
  RunResult collect() const;

  // Individual operations, usable directly from tests.
  /// Moves the mobile node now: layer-2 handoff, then address configuration
  /// and the protocol's binding procedure.
  void move(NodeId mn, SubnetId subnet);
  /// Assigns a care-of address on the subnet the node is attached to. Returns
  /// the current address unchanged when it already belongs to that subnet.
  Address configure_coa(NodeId mn, SubnetId subnet);
  /// Sends a binding update from mn to peer (HA or CN) for its current CoA.
  /// Throws BindingRefused when the peer holds no binding role for mn.
  void send_binding_update(NodeId mn, NodeId peer);
  /// Emits one data packet from a CBR stream source now.
  std::uint64_t emit(std::size_t traffic_index);

  Engine& engine() { return engine_; }
  const Topology& topology() const { return topo_; }
  AddressTable& addresses() { return table_; }
  Network& network() { return net_; }
  const mcast::MulticastRouting& multicast() const { return mcast_; }
  const DeliveryLedger& ledger() const { return ledger_; }
  const std::vector<HandoverRecord>& handovers() const { return records_; }
  const SimConfig& config() const { return cfg_; }

  Address home_address(NodeId mn) const;
  Address care_of(NodeId mn) const;
  std::optional<Address> regional(NodeId mn) const;
  NodeId current_map(NodeId mn) const;
  mip6::Phase phase(NodeId mn) const;
  /// Binding cache held by an HA, MAP or CN; nullptr for other nodes.
  const mip6::BindingCache* cache(NodeId holder) const;
  /// Mobiles a proxy (MAP or HA) currently serves for a group.
  std::set<NodeId> proxied(NodeId proxy, const Address& group) const;
  /// Tree source address a mobile sender currently injects under.
  Address send_source(NodeId mn) const;

 private:
  struct Impl;
  Engine engine_;
  Topology topo_;
  AddressTable table_;
  Network net_;
  mcast::MulticastRouting mcast_;
  SimConfig cfg_;
  DeliveryLedger ledger_;
  std::vector<HandoverRecord> records_;
  std::unique_ptr<Impl> impl_;
  bool setup_done_ = false;
};

}  // namespace mmlab
