#include "mmlab/network.hpp"

#include <algorithm>
#include <queue>

#include "mmlab/error.hpp"

namespace mmlab {

std::string_view loss_reason_name(LossReason r) {
  switch (r) {
    case LossReason::None: return "None";
    case LossReason::LinkDown: return "LinkDown";
    case LossReason::NoBinding: return "NoBinding";
    case LossReason::StaleBinding: return "StaleBinding";
    case LossReason::BranchPending: return "BranchPending";
    case LossReason::NoTree: return "NoTree";
    case LossReason::HandoffInProgress: return "HandoffInProgress";
    case LossReason::MulticastUnaware: return "MulticastUnaware";
    case LossReason::Pruned: return "Pruned";
    case LossReason::Unreachable: return "Unreachable";
    case LossReason::TunnelDepthExceeded: return "TunnelDepthExceeded";
    case LossReason::Unaccounted: return "Unaccounted";
  }
  return "?";
}

const Routing::Tree& Routing::tree_to(NodeId to, bool mcast_only) const {
  if (cached_version_ != topo_.version()) {
    cache_.clear();
    cached_version_ = topo_.version();
  }
  auto key = std::make_pair(to, mcast_only);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  const std::size_t n = topo_.size();
  const std::int64_t proc = topo_.processing_delay.count();
  Tree t{std::vector<std::int64_t>(n, -1), std::vector<NodeId>(n, kNoNode)};
  using Item = std::pair<std::int64_t, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  t.dist[to] = 0;
  pq.push({0, to});
  std::vector<bool> done(n, false);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (done[u]) continue;
    done[u] = true;
    for (const Neighbor& nb : topo_.neighbors(u)) {
      if (mcast_only && !nb.mcast) continue;
      const NodeId v = nb.node;
      // cost of v -> u
      const auto l = topo_.link(v, u);
      const std::int64_t nd = d + l->delay_ab.count() + proc;
      if (t.dist[v] < 0 || nd < t.dist[v]) {
        t.dist[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  for (NodeId v = 0; v < n; ++v) {
    if (v == to || t.dist[v] < 0) continue;
    // neighbors() is sorted by node id, so the first match is the tie-break winner.
    for (const Neighbor& nb : topo_.neighbors(v)) {
      if (mcast_only && !nb.mcast) continue;
      if (t.dist[nb.node] >= 0 && t.dist[nb.node] + nb.delay.count() + proc == t.dist[v]) {
        t.next[v] = nb.node;
        break;
      }
    }
  }
  return cache_.emplace(key, std::move(t)).first->second;
}

Path Routing::route(NodeId from, NodeId to, bool mcast_only) const {
  if (from >= topo_.size() || to >= topo_.size()) throw Error(Errc::Unreachable, "unknown node");
  Path p;
  p.nodes.push_back(from);
  if (from == to) return p;
  const Tree& t = tree_to(to, mcast_only);
  if (t.dist[from] < 0) {
    throw Error(Errc::Unreachable, "no path " + topo_.name(from) + " -> " + topo_.name(to));
  }
  NodeId cur = from;
  while (cur != to) {
    NodeId nx = t.next[cur];
    p.link_delay += topo_.link(cur, nx)->delay_ab;
    p.nodes.push_back(nx);
    cur = nx;
  }
  return p;
}

SimTime Routing::distance(NodeId from, NodeId to, bool mcast_only) const {
  return route(from, to, mcast_only).transit(topo_.processing_delay);
}

Path unicast_route(const Topology& topo, const Routing& routing, const AddressTable& table, NodeId from,
                   const Address& to) {
  if (to.is_group()) throw Error(Errc::UnassignedAddress, "group address is not a unicast target");
  if (to.subnet >= topo.subnet_count()) throw Error(Errc::UnassignedAddress, "unknown subnet");
  std::optional<NodeId> owner = table.owner(to);
  if (!owner && to.host == 1) owner = topo.subnet_node(to.subnet);
  if (!owner) throw Error(Errc::UnassignedAddress, format_address(topo, to));

  const NodeId locator = topo.subnet_node(to.subnet);
  const bool to_mobile = topo.role(*owner) == Role::Mobile && topo.is_access_subnet(to.subnet);

  Path path;
  NodeId start = from;
  if (topo.role(from) == Role::Mobile) {
    if (to_mobile && *owner == from) {
      path.nodes.push_back(from);
      return path;
    }
    auto ar = table.attached_to(from);
    if (!ar) throw Error(Errc::Unreachable, topo.name(from) + " is not attached");
    path.nodes.push_back(from);
    path.link_delay += topo.access_delay;
    start = *ar;
  }
  Path core = routing.route(start, locator);
  path.nodes.insert(path.nodes.end(), core.nodes.begin(), core.nodes.end());
  path.link_delay += core.link_delay;
  if (to_mobile) {
    path.nodes.push_back(*owner);
    path.link_delay += topo.access_delay;
  }
  return path;
}

void Network::drop(const Packet& p, NodeId at, LossReason why, const Drop& on_drop) {
  engine_.note(at, "drop", std::string(loss_reason_name(why)) + " uid=" + std::to_string(p.uid));
  if (observer_) observer_->copy_ended(p);
  if (on_drop) {
    on_drop(p, at, why);
  } else if (default_drop_) {
    default_drop_(p, at, why);
  }
}

void Network::forward(Packet p, const Path& path, Arrival on_arrival, Drop on_drop) {
  if (observer_) observer_->copy_sent(p);
  if (path.nodes.empty()) return;
  p.via.push_back(path.nodes.front());
  if (path.nodes.size() == 1) {
    engine_.schedule_in(SimTime{}, path.nodes.front(), "arrive",
                        [this, p = std::move(p), on_arrival, at = path.nodes.front()]() mutable {
                          if (observer_) observer_->copy_ended(p);
                          on_arrival(std::move(p), at);
                        },
                        "uid=" + std::to_string(p.uid));
    return;
  }
  hop(std::move(p), path.nodes, 1, std::move(on_arrival), std::move(on_drop));
}

void Network::hop(Packet p, std::vector<NodeId> nodes, std::size_t index, Arrival on_arrival, Drop on_drop) {
  const NodeId prev = nodes[index - 1];
  const NodeId cur = nodes[index];
  const bool access_hop = topo_.role(prev) == Role::Mobile || topo_.role(cur) == Role::Mobile;
  SimTime delay = topo_.access_delay;
  std::optional<Link> planned;
  if (!access_hop) {
    planned = topo_.link(prev, cur);
    if (!planned) {
      drop(p, prev, LossReason::LinkDown, on_drop);
      return;
    }
    delay = planned->delay_ab;
  }
  const bool last = index + 1 == nodes.size();
  const std::uint64_t version = topo_.version();
  std::string detail = "uid=" + std::to_string(p.uid) + " seq=" + std::to_string(p.seq);
  engine_.schedule_in(
      delay + topo_.processing_delay, cur, last ? "arrive" : "hop",
      [this, p = std::move(p), nodes = std::move(nodes), index, on_arrival = std::move(on_arrival),
       on_drop = std::move(on_drop), prev, cur, access_hop, version]() mutable {
        if (!access_hop && topo_.version() != version && !topo_.link(prev, cur)) {
          drop(p, prev, LossReason::LinkDown, on_drop);
          return;
        }
        if (topo_.role(cur) == Role::Mobile) {
          auto ar = table_.attached_to(cur);
          auto owner = table_.owner(p.net_dst);
          if (!ar || *ar != prev || !owner || *owner != cur) {
            drop(p, prev, LossReason::StaleBinding, on_drop);
            return;
          }
        }
        p.via.push_back(cur);
        if (index + 1 == nodes.size()) {
          if (observer_) observer_->copy_ended(p);
          on_arrival(std::move(p), cur);
          return;
        }
        hop(std::move(p), std::move(nodes), index + 1, std::move(on_arrival), std::move(on_drop));
      },
      std::move(detail));
}

}  // namespace mmlab
