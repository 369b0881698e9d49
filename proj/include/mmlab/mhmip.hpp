#pragma once

#include <deque>
#include <optional>

#include "mmlab/address.hpp"
#include "mmlab/simkernel.hpp"
#include "mmlab/topology.hpp"

namespace mmlab::mhmip {

struct Config {
  SimTime bicast_duration = SimTime::ms(200);
  SimTime rapid_window = SimTime::sec(10);
  int rapid_threshold = 2;
  bool bicast = true;
  /// When false the MN always adopts the new MAP (for forced-adopt comparisons).
  bool fallback = true;
  /// Previous MAP forwards to the MN's new regional address (anchor to anchor)
  /// rather than straight to its on-link address.
  bool forward_to_new_map = true;
  bool home_address_option = true;
};

/// Contents of a MAP option in a router advertisement.
struct MapInfo {
  NodeId map_id = kNoNode;
  SubnetId rcoa_prefix = 0;
  bool multicast_capable = true;
  std::uint32_t distance = 0;  // hops from the advertising access router
};

/// Throws Errc::NoMapAdvertised when the subnet belongs to no MAP domain.
MapInfo map_discover(const Topology& topo, SubnetId subnet);

enum class FallbackDecision { AdoptNewMap, RemainWithPrevious };

/// Remain with the previous MAP when the candidate domain is not multicast
/// capable or when recent inter-domain moves exceed the threshold.
FallbackDecision fallback_check(const MapInfo& candidate, int recent_inter_map_moves, const Config& cfg);

/// Sliding-window count of inter-domain moves.
class MoveWindow {
 public:
  /// Records a move at `now` and returns the count inside (now - window, now].
  int record(SimTime now, SimTime window);
  int count(SimTime now, SimTime window);

 private:
  std::deque<SimTime> moves_;
};

}  // namespace mmlab::mhmip
