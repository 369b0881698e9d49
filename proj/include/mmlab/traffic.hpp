#pragma once

#include <vector>

#include "mmlab/address.hpp"
#include "mmlab/simkernel.hpp"
#include "mmlab/topology.hpp"

namespace mmlab {

inline constexpr double kMinRateKbps = 24.0;
inline constexpr double kMaxRateKbps = 1400.0;

struct CbrSourceSpec {
  NodeId source = kNoNode;
  Address group;
  double rate_kbps = 64.0;
  std::uint32_t packet_bytes = 160;
  SimTime start;
  SimTime stop;

  /// Throws RateOutOfRange or ValidationError.
  void validate() const;
  /// Nominal spacing, rounded to the microsecond.
  SimTime interval() const;
};

/// Emission times start + k*interval for k = 0.. while < stop. Times are
/// computed from k directly so rounding never accumulates.
std::vector<SimTime> cbr_schedule(const CbrSourceSpec& spec);

struct MovementStep {
  SimTime at;
  SubnetId subnet;
  bool operator==(const MovementStep&) const = default;
};

struct MovementTrace {
  NodeId mn = kNoNode;
  SubnetId initial = 0;
  std::vector<MovementStep> steps;
};

/// Exponential dwell per subnet, then a uniformly chosen adjacent subnet.
/// Steps at or beyond `until` are not generated.
MovementTrace random_walk(const Topology& topo, NodeId mn, SubnetId start, SimTime mean_dwell, SimTime until,
                          RandomStream& stream);

/// Validates and returns the steps verbatim. Throws NonMonotoneTimes when
/// times do not strictly increase, RepeatedSubnet on a repeated subnet.
MovementTrace scripted_path(NodeId mn, SubnetId initial, std::vector<MovementStep> steps);

}  // namespace mmlab
