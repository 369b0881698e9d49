#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mmlab/address.hpp"
#include "mmlab/simkernel.hpp"

namespace mmlab {

enum class Role { Router, AccessRouter, HomeAgent, Map, Correspondent, Mobile };

std::string_view role_name(Role r);
std::optional<Role> role_from_name(std::string_view s);

struct Link {
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  SimTime delay_ab;
  SimTime delay_ba;
  bool mcast = true;
};

struct Neighbor {
  NodeId node;
  SimTime delay;  // one-way, this -> node
  bool mcast;
};

/// Static node/link graph plus the subnet and MAP-domain layout.
///
/// Every fixed node owns a node-local subnet holding its own address; home
/// addresses live on the home agent's node subnet and regional care-of
/// addresses on the MAP's node subnet. Access routers additionally own one
/// access subnet each, named in the topology document.
class Topology {
 public:
  NodeId add_node(const std::string& id, Role role);
  void add_link(NodeId a, NodeId b, SimTime delay, bool mcast = true, std::optional<SimTime> delay_ba = {});
  bool remove_link(NodeId a, NodeId b);
  SubnetId add_access_subnet(NodeId access_router, const std::string& name);
  void set_domain(SubnetId subnet, NodeId map);
  void set_home_agent(NodeId mobile, NodeId ha) { home_agent_[mobile] = ha; }
  void set_initial_subnet(NodeId mobile, SubnetId s) { initial_subnet_[mobile] = s; }

  /// Parses {nodes, links, subnets, domains, processing_us?, access_delay_us?}.
  /// Throws Error(ValidationError) naming the violated rule.
  static Topology from_json(const nlohmann::json& doc);
  /// Connectivity of fixed nodes, positive delays, domain targets are MAPs.
  void validate() const;

  std::size_t size() const { return names_.size(); }
  const std::string& name(NodeId n) const { return names_.at(n); }
  std::optional<NodeId> find(const std::string& id) const;
  NodeId id(const std::string& name) const;  // throws ValidationError
  Role role(NodeId n) const { return roles_.at(n); }
  std::vector<NodeId> nodes_with_role(Role r) const;

  const std::vector<Neighbor>& neighbors(NodeId n) const { return adj_.at(n); }
  std::optional<Link> link(NodeId a, NodeId b) const;
  const std::vector<Link>& links() const { return links_; }
  std::uint64_t version() const { return version_; }

  std::size_t subnet_count() const { return subnet_names_.size(); }
  const std::string& subnet_name(SubnetId s) const { return subnet_names_.at(s); }
  std::optional<SubnetId> find_subnet(const std::string& name) const;
  /// Node that terminates the subnet: the access router, or the owning fixed node.
  NodeId subnet_node(SubnetId s) const { return subnet_node_.at(s); }
  bool is_access_subnet(SubnetId s) const { return subnet_access_.at(s); }
  SubnetId node_subnet(NodeId n) const { return node_subnet_.at(n); }
  std::optional<SubnetId> access_subnet_of(NodeId ar) const;
  std::vector<SubnetId> access_subnets() const;
  std::optional<NodeId> domain_map(SubnetId s) const;
  std::vector<SubnetId> domain_subnets(NodeId map) const;
  /// Access subnets whose routers share a neighbor of role Router; sorted.
  std::vector<SubnetId> adjacent_subnets(SubnetId s) const;
  /// True when every link incident to the node is multicast capable.
  bool multicast_capable(NodeId n) const;

  /// Primary address of a fixed node.
  Address node_address(NodeId n) const { return Address{node_subnet(n), 1, AddrKind::Home}; }

  std::optional<NodeId> home_agent(NodeId mobile) const;
  std::optional<SubnetId> initial_subnet(NodeId mobile) const;

  SimTime processing_delay = SimTime::ms(1);
  SimTime access_delay = SimTime::ms(1);

 private:
  SubnetId add_subnet(const std::string& name, NodeId owner, bool access);
  void rebuild_adjacency();

  std::vector<std::string> names_;
  std::vector<Role> roles_;
  std::unordered_map<std::string, NodeId> by_name_;
  std::vector<Link> links_;
  std::vector<std::vector<Neighbor>> adj_;
  std::uint64_t version_ = 0;

  std::vector<std::string> subnet_names_;
  std::vector<NodeId> subnet_node_;
  std::vector<bool> subnet_access_;
  std::unordered_map<std::string, SubnetId> subnet_by_name_;
  std::vector<SubnetId> node_subnet_;
  std::unordered_map<SubnetId, NodeId> domain_;
  std::unordered_map<NodeId, NodeId> home_agent_;
  std::unordered_map<NodeId, SubnetId> initial_subnet_;
};

std::string format_address(const Topology& topo, const Address& a);

}  // namespace mmlab
