#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "mmlab/simkernel.hpp"

namespace mmlab {

using SubnetId = std::uint32_t;
inline constexpr SubnetId kGroupSubnet = 0xffffffffu;

enum class AddrKind : std::uint8_t { Home, CareOf, RegionalCareOf, OnLinkCareOf, Group };

std::string_view addr_kind_name(AddrKind k);

struct Address {
  SubnetId subnet = 0;
  std::uint32_t host = 0;
  AddrKind kind = AddrKind::Home;

  static Address group(std::uint32_t index) { return {kGroupSubnet, index, AddrKind::Group}; }

  bool is_group() const { return kind == AddrKind::Group; }
  bool operator==(const Address& o) const { return subnet == o.subnet && host == o.host && kind == o.kind; }
  auto operator<=>(const Address& o) const {
    if (auto c = subnet <=> o.subnet; c != 0) return c;
    if (auto c = host <=> o.host; c != 0) return c;
    return kind <=> o.kind;
  }
};

/// Dynamic unicast address bindings plus mobile-node attachment points.
class AddressTable {
 public:
  /// Throws ValidationError if (subnet, host) is already bound to another node.
  void bind(const Address& a, NodeId owner);
  void unbind(const Address& a);
  std::optional<NodeId> owner(const Address& a) const;

  void attach(NodeId mobile, NodeId access_router) { attached_[mobile] = access_router; }
  void detach(NodeId mobile) { attached_.erase(mobile); }
  std::optional<NodeId> attached_to(NodeId mobile) const;

  /// Next free host number on a subnet (hosts start at 2; 1 is the router).
  std::uint32_t allocate_host(SubnetId subnet) { return next_host_[subnet]++ + 2; }

 private:
  std::map<std::pair<SubnetId, std::uint32_t>, NodeId> owners_;
  std::map<NodeId, NodeId> attached_;
  std::map<SubnetId, std::uint32_t> next_host_;
};

}  // namespace mmlab
