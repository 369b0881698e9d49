#include "mmlab/topology.hpp"

#include <algorithm>
#include <set>

#include "mmlab/error.hpp"

namespace mmlab {

namespace {

Error invalid(const std::string& what) { return Error(Errc::ValidationError, what); }

std::string json_scalar_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw invalid("expected string or integer id, got " + v.dump());
}

}  // namespace

std::string_view role_name(Role r) {
  switch (r) {
    case Role::Router: return "router";
    case Role::AccessRouter: return "access_router";
    case Role::HomeAgent: return "home_agent";
    case Role::Map: return "map";
    case Role::Correspondent: return "correspondent";
    case Role::Mobile: return "mobile";
  }
  return "?";
}

std::optional<Role> role_from_name(std::string_view s) {
  for (Role r : {Role::Router, Role::AccessRouter, Role::HomeAgent, Role::Map, Role::Correspondent, Role::Mobile}) {
    if (role_name(r) == s) return r;
  }
  return std::nullopt;
}

std::string_view addr_kind_name(AddrKind k) {
  switch (k) {
    case AddrKind::Home: return "home";
    case AddrKind::CareOf: return "coa";
    case AddrKind::RegionalCareOf: return "rcoa";
    case AddrKind::OnLinkCareOf: return "lcoa";
    case AddrKind::Group: return "group";
  }
  return "?";
}

void AddressTable::bind(const Address& a, NodeId owner) {
  auto key = std::make_pair(a.subnet, a.host);
  auto [it, inserted] = owners_.emplace(key, owner);
  if (!inserted && it->second != owner) {
    throw Error(Errc::ValidationError, "address already bound to another node");
  }
}

void AddressTable::unbind(const Address& a) { owners_.erase({a.subnet, a.host}); }

std::optional<NodeId> AddressTable::owner(const Address& a) const {
  auto it = owners_.find({a.subnet, a.host});
  if (it == owners_.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeId> AddressTable::attached_to(NodeId mobile) const {
  auto it = attached_.find(mobile);
  if (it == attached_.end()) return std::nullopt;
  return it->second;
}

NodeId Topology::add_node(const std::string& id, Role role) {
  if (by_name_.count(id)) throw invalid("duplicate node id '" + id + "'");
  const auto n = static_cast<NodeId>(names_.size());
  names_.push_back(id);
  roles_.push_back(role);
  by_name_.emplace(id, n);
  adj_.emplace_back();
  node_subnet_.push_back(add_subnet("@" + id, n, false));
  ++version_;
  return n;
}

SubnetId Topology::add_subnet(const std::string& name, NodeId owner, bool access) {
  if (subnet_by_name_.count(name)) throw invalid("duplicate subnet id '" + name + "'");
  const auto s = static_cast<SubnetId>(subnet_names_.size());
  subnet_names_.push_back(name);
  subnet_node_.push_back(owner);
  subnet_access_.push_back(access);
  subnet_by_name_.emplace(name, s);
  return s;
}

void Topology::add_link(NodeId a, NodeId b, SimTime delay, bool mcast, std::optional<SimTime> delay_ba) {
  if (a >= size() || b >= size() || a == b) throw invalid("link endpoints must be two distinct nodes");
  if (role(a) == Role::Mobile || role(b) == Role::Mobile) throw invalid("mobile nodes attach via subnets, not links");
  const SimTime back = delay_ba.value_or(delay);
  if (delay <= SimTime{} || back <= SimTime{}) {
    throw invalid("link " + name(a) + "-" + name(b) + " delay must be strictly positive");
  }
  if (link(a, b)) throw invalid("duplicate link " + name(a) + "-" + name(b));
  links_.push_back(Link{a, b, delay, back, mcast});
  rebuild_adjacency();
}

bool Topology::remove_link(NodeId a, NodeId b) {
  auto it = std::find_if(links_.begin(), links_.end(),
                         [&](const Link& l) { return (l.a == a && l.b == b) || (l.a == b && l.b == a); });
  if (it == links_.end()) return false;
  links_.erase(it);
  rebuild_adjacency();
  return true;
}

void Topology::rebuild_adjacency() {
  for (auto& v : adj_) v.clear();
  for (const Link& l : links_) {
    adj_[l.a].push_back({l.b, l.delay_ab, l.mcast});
    adj_[l.b].push_back({l.a, l.delay_ba, l.mcast});
  }
  for (auto& v : adj_) {
    std::sort(v.begin(), v.end(), [&](const Neighbor& x, const Neighbor& y) { return names_[x.node] < names_[y.node]; });
  }
  ++version_;
}

SubnetId Topology::add_access_subnet(NodeId ar, const std::string& name) {
  if (role(ar) != Role::AccessRouter) throw invalid("subnet '" + name + "' must hang off an access_router, not " + this->name(ar));
  if (access_subnet_of(ar)) throw invalid("access router " + this->name(ar) + " already has a subnet");
  return add_subnet(name, ar, true);
}

void Topology::set_domain(SubnetId subnet, NodeId map) {
  if (subnet >= subnet_count() || !is_access_subnet(subnet)) throw invalid("domain entry for unknown access subnet");
  if (role(map) != Role::Map) throw invalid("domain of subnet '" + subnet_name(subnet) + "' names non-MAP node " + name(map));
  domain_[subnet] = map;
}

std::optional<NodeId> Topology::find(const std::string& id) const {
  auto it = by_name_.find(id);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

NodeId Topology::id(const std::string& name) const {
  auto n = find(name);
  if (!n) throw invalid("unknown node id '" + name + "'");
  return *n;
}

std::vector<NodeId> Topology::nodes_with_role(Role r) const {
  std::vector<NodeId> out;
  for (NodeId n = 0; n < size(); ++n) {
    if (roles_[n] == r) out.push_back(n);
  }
  return out;
}

std::optional<Link> Topology::link(NodeId a, NodeId b) const {
  for (const Link& l : links_) {
    if (l.a == a && l.b == b) return l;
    if (l.a == b && l.b == a) return Link{a, b, l.delay_ba, l.delay_ab, l.mcast};
  }
  return std::nullopt;
}

std::optional<SubnetId> Topology::find_subnet(const std::string& name) const {
  auto it = subnet_by_name_.find(name);
  if (it == subnet_by_name_.end()) return std::nullopt;
  return it->second;
}

std::optional<SubnetId> Topology::access_subnet_of(NodeId ar) const {
  for (SubnetId s = 0; s < subnet_count(); ++s) {
    if (subnet_access_[s] && subnet_node_[s] == ar) return s;
  }
  return std::nullopt;
}

std::vector<SubnetId> Topology::access_subnets() const {
  std::vector<SubnetId> out;
  for (SubnetId s = 0; s < subnet_count(); ++s) {
    if (subnet_access_[s]) out.push_back(s);
  }
  return out;
}

std::optional<NodeId> Topology::domain_map(SubnetId s) const {
  auto it = domain_.find(s);
  if (it == domain_.end()) return std::nullopt;
  return it->second;
}

std::vector<SubnetId> Topology::domain_subnets(NodeId map) const {
  std::vector<SubnetId> out;
  for (SubnetId s : access_subnets()) {
    if (domain_map(s) == map) out.push_back(s);
  }
  return out;
}

std::vector<SubnetId> Topology::adjacent_subnets(SubnetId s) const {
  const NodeId ar = subnet_node(s);
  std::set<std::string> seen;
  std::vector<SubnetId> out;
  for (const Neighbor& r : neighbors(ar)) {
    if (role(r.node) != Role::Router) continue;
    for (const Neighbor& other : neighbors(r.node)) {
      if (other.node == ar || role(other.node) != Role::AccessRouter) continue;
      if (auto os = access_subnet_of(other.node); os && seen.insert(subnet_name(*os)).second) out.push_back(*os);
    }
  }
  std::sort(out.begin(), out.end(), [&](SubnetId x, SubnetId y) { return subnet_name(x) < subnet_name(y); });
  return out;
}

bool Topology::multicast_capable(NodeId n) const {
  return std::all_of(neighbors(n).begin(), neighbors(n).end(), [](const Neighbor& nb) { return nb.mcast; });
}

std::optional<NodeId> Topology::home_agent(NodeId mobile) const {
  auto it = home_agent_.find(mobile);
  if (it == home_agent_.end()) return std::nullopt;
  return it->second;
}

std::optional<SubnetId> Topology::initial_subnet(NodeId mobile) const {
  auto it = initial_subnet_.find(mobile);
  if (it == initial_subnet_.end()) return std::nullopt;
  return it->second;
}

void Topology::validate() const {
  std::vector<NodeId> fixed;
  for (NodeId n = 0; n < size(); ++n) {
    if (roles_[n] != Role::Mobile) fixed.push_back(n);
  }
  if (!fixed.empty()) {
    std::vector<bool> seen(size(), false);
    std::vector<NodeId> stack{fixed.front()};
    seen[fixed.front()] = true;
    while (!stack.empty()) {
      NodeId n = stack.back();
      stack.pop_back();
      for (const Neighbor& nb : neighbors(n)) {
        if (!seen[nb.node]) {
          seen[nb.node] = true;
          stack.push_back(nb.node);
        }
      }
    }
    for (NodeId n : fixed) {
      if (!seen[n]) throw invalid("topology not connected: node " + name(n) + " unreachable");
    }
  }
  for (NodeId n = 0; n < size(); ++n) {
    if (roles_[n] != Role::Mobile) continue;
    auto ha = home_agent(n);
    if (!ha) throw invalid("mobile node " + name(n) + " has no home agent");
    if (role(*ha) != Role::HomeAgent) throw invalid("home_agent of " + name(n) + " is not a home_agent node");
    if (!initial_subnet(n)) throw invalid("mobile node " + name(n) + " has no initial subnet");
  }
  if (processing_delay < SimTime{} || access_delay <= SimTime{}) throw invalid("processing_us must be >= 0 and access_delay_us > 0");
}

Topology Topology::from_json(const nlohmann::json& doc) {
  Topology t;
  try {
    if (!doc.is_object()) throw invalid("topology must be an object");
    for (const auto& n : doc.at("nodes")) {
      const std::string id = json_scalar_string(n.at("id"));
      const std::string rs = n.at("role").get<std::string>();
      auto role = role_from_name(rs);
      if (!role) throw invalid("node " + id + " has unknown role '" + rs + "'");
      t.add_node(id, *role);
    }
    for (const auto& l : doc.at("links")) {
      const NodeId a = t.id(json_scalar_string(l.at("a")));
      const NodeId b = t.id(json_scalar_string(l.at("b")));
      const auto delay = SimTime::us(l.at("delay_us").get<std::int64_t>());
      std::optional<SimTime> back;
      if (l.contains("delay_ba_us")) back = SimTime::us(l.at("delay_ba_us").get<std::int64_t>());
      t.add_link(a, b, delay, l.value("mcast", true), back);
    }
    if (doc.contains("subnets")) {
      for (const auto& [ar, subnet] : doc.at("subnets").items()) {
        t.add_access_subnet(t.id(ar), json_scalar_string(subnet));
      }
    }
    if (doc.contains("domains")) {
      for (const auto& [subnet, map] : doc.at("domains").items()) {
        auto s = t.find_subnet(subnet);
        if (!s) throw invalid("domains names unknown subnet '" + subnet + "'");
        t.set_domain(*s, t.id(json_scalar_string(map)));
      }
    }
    for (const auto& n : doc.at("nodes")) {
      const NodeId id = t.id(json_scalar_string(n.at("id")));
      if (t.role(id) != Role::Mobile) continue;
      if (n.contains("home_agent")) {
        t.set_home_agent(id, t.id(json_scalar_string(n.at("home_agent"))));
      } else if (auto has = t.nodes_with_role(Role::HomeAgent); has.size() == 1) {
        t.set_home_agent(id, has.front());
      }
      if (n.contains("subnet")) {
        const std::string s = json_scalar_string(n.at("subnet"));
        auto sid = t.find_subnet(s);
        if (!sid) throw invalid("mobile node " + t.name(id) + " starts on unknown subnet '" + s + "'");
        t.set_initial_subnet(id, *sid);
      }
    }
    if (doc.contains("processing_us")) t.processing_delay = SimTime::us(doc.at("processing_us").get<std::int64_t>());
    if (doc.contains("access_delay_us")) t.access_delay = SimTime::us(doc.at("access_delay_us").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw invalid(std::string("topology: ") + e.what());
  }
  t.validate();
  return t;
}

std::string format_address(const Topology& topo, const Address& a) {
  if (a.is_group()) return "G" + std::to_string(a.host);
  std::string s = a.subnet < topo.subnet_count() ? topo.subnet_name(a.subnet) : std::to_string(a.subnet);
  return s + ":" + std::to_string(a.host) + "/" + std::string(addr_kind_name(a.kind));
}

}  // namespace mmlab
