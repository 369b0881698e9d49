#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mmlab/address.hpp"
#include "mmlab/simkernel.hpp"

namespace mmlab {

struct TunnelHeader {
  Address entry;
  Address exit;
  bool operator==(const TunnelHeader&) const = default;
};

struct HomeAddressOption {
  Address home;
  bool operator==(const HomeAddressOption&) const = default;
};

enum class PacketKind : std::uint8_t {
  Data,
  BindingUpdate,      // MN -> HA / CN
  BindingAck,
  LocalBindingUpdate, // MN -> MAP
  LocalBindingAck,
  ReactiveBindingUpdate,  // MN -> previous MAP
  Release,            // new MAP -> previous MAP
  TreeReady,          // new MAP -> MN
};

/// Extra fields carried by signaling packets.
struct Signal {
  NodeId mn = kNoNode;
  Address home;
  Address care_of;
  Address regional;
  NodeId previous_map = kNoNode;
  std::uint64_t epoch = 0;
  bool refused = false;
  bool refresh = false;
  bool proxy = false;  // asks the HA to proxy the sender's group memberships
  Address group;
};

/// How a data copy reached its receiver; used by handover analysis.
enum class RouteTag : std::uint8_t { Native, Tunnel, Forwarded, Bicast };

struct Packet {
  static constexpr std::size_t kMaxTunnelDepth = 2;

  PacketKind kind = PacketKind::Data;
  Address logical_src;
  Address net_src;
  Address net_dst;
  std::uint64_t seq = 0;
  SimTime sent_at;
  /// Outer headers; back() is the outermost. Each frame keeps the addresses
  /// it replaced so decapsulation restores the inner packet exactly.
  struct Frame {
    TunnelHeader header;
    Address inner_src;
    Address inner_dst;
    bool operator==(const Frame&) const = default;
  };
  std::vector<Frame> encap_stack;
  std::optional<HomeAddressOption> dst_option;
  std::uint32_t payload_bytes = 0;

  // Simulation bookkeeping, not part of the modeled header.
  std::uint64_t uid = 0;
  std::vector<NodeId> targets;
  std::vector<NodeId> via;
  RouteTag route = RouteTag::Native;
  Signal signal;

  std::size_t tunnel_depth() const { return encap_stack.size(); }

  /// Equality of the modeled header and payload (bookkeeping ignored).
  bool same_datagram(const Packet& o) const;
};

/// Pushes a tunnel header; net_src/net_dst become the tunnel entry/exit.
/// Throws Errc::TunnelDepthExceeded at depth 2.
Packet encapsulate(Packet p, const TunnelHeader& header);
/// Pops the outermost header, restoring the inner addresses. No-op at depth 0.
Packet decapsulate(Packet p);

/// Source address an application sees: the Home Address Option when present,
/// otherwise the innermost network source.
Address application_source(const Packet& p);

}  // namespace mmlab
