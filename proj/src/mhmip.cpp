#include "mmlab/mhmip.hpp"

#include "mmlab/error.hpp"

namespace mmlab::mhmip {

MapInfo map_discover(const Topology& topo, SubnetId subnet) {
  auto map = topo.domain_map(subnet);
  if (!map) throw Error(Errc::NoMapAdvertised, "subnet " + topo.subnet_name(subnet));
  MapInfo info;
  info.map_id = *map;
  info.rcoa_prefix = topo.node_subnet(*map);
  info.multicast_capable = topo.multicast_capable(*map);
  // Hop count along the unicast route from the advertising router.
  const NodeId ar = topo.subnet_node(subnet);
  if (ar != *map) {
    std::vector<int> dist(topo.size(), -1);
    std::deque<NodeId> q{ar};
    dist[ar] = 0;
    while (!q.empty()) {
      NodeId n = q.front();
      q.pop_front();
      for (const Neighbor& nb : topo.neighbors(n)) {
        if (dist[nb.node] < 0) {
          dist[nb.node] = dist[n] + 1;
          q.push_back(nb.node);
        }
      }
    }
    info.distance = dist[*map] < 0 ? 0 : static_cast<std::uint32_t>(dist[*map]);
  }
  return info;
}

FallbackDecision fallback_check(const MapInfo& candidate, int recent_inter_map_moves, const Config& cfg) {
  if (!candidate.multicast_capable) return FallbackDecision::RemainWithPrevious;
  if (recent_inter_map_moves > cfg.rapid_threshold) return FallbackDecision::RemainWithPrevious;
  return FallbackDecision::AdoptNewMap;
}

int MoveWindow::record(SimTime now, SimTime window) {
  moves_.push_back(now);
  return count(now, window);
}

int MoveWindow::count(SimTime now, SimTime window) {
  while (!moves_.empty() && moves_.front() <= now - window) moves_.pop_front();
  return static_cast<int>(moves_.size());
}

}  // namespace mmlab::mhmip
