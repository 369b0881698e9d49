#include "mmlab/traffic.hpp"

#include <cmath>

#include "mmlab/error.hpp"

namespace mmlab {

void CbrSourceSpec::validate() const {
  if (!(rate_kbps >= kMinRateKbps && rate_kbps <= kMaxRateKbps)) {
    throw Error(Errc::RateOutOfRange, "rate " + std::to_string(rate_kbps) + " kbit/s outside [24, 1400]");
  }
  if (packet_bytes == 0) throw Error(Errc::ValidationError, "packet_bytes must be positive");
  if (stop < start) throw Error(Errc::ValidationError, "traffic stop before start");
  if (!group.is_group()) throw Error(Errc::ValidationError, "traffic target is not a group");
}

SimTime CbrSourceSpec::interval() const {
  return SimTime::us(std::llround(packet_bytes * 8.0 * 1000.0 / rate_kbps));
}

std::vector<SimTime> cbr_schedule(const CbrSourceSpec& spec) {
  spec.validate();
  // bits / (kbit/s) = ms; scaled to microseconds.
  const double per_packet_us = spec.packet_bytes * 8.0 * 1000.0 / spec.rate_kbps;
  std::vector<SimTime> out;
  for (std::int64_t k = 0;; ++k) {
    SimTime t = spec.start + SimTime::us(std::llround(static_cast<double>(k) * per_packet_us));
    if (t >= spec.stop) break;
    out.push_back(t);
  }
  return out;
}

MovementTrace random_walk(const Topology& topo, NodeId mn, SubnetId start, SimTime mean_dwell, SimTime until,
                          RandomStream& stream) {
  if (mean_dwell <= SimTime{}) throw Error(Errc::ValidationError, "mean_dwell must be positive");
  MovementTrace trace{mn, start, {}};
  SubnetId cur = start;
  SimTime t;
  const auto dwell = DistributionSpec::exponential(static_cast<double>(mean_dwell.count()));
  for (;;) {
    const auto next = topo.adjacent_subnets(cur);
    if (next.empty()) break;
    t += SimTime::us(std::max<std::int64_t>(1, std::llround(stream.draw(dwell))));
    if (t >= until) break;
    cur = next[stream.pick(next.size())];
    trace.steps.push_back({t, cur});
  }
  return trace;
}

MovementTrace scripted_path(NodeId mn, SubnetId initial, std::vector<MovementStep> steps) {
  SubnetId prev = initial;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0 && steps[i].at <= steps[i - 1].at) {
      throw Error(Errc::NonMonotoneTimes, "step " + std::to_string(i) + " is not after step " + std::to_string(i - 1));
    }
    if (steps[i].subnet == prev) {
      throw Error(Errc::RepeatedSubnet, "step " + std::to_string(i) + " repeats the current subnet");
    }
    prev = steps[i].subnet;
  }
  return MovementTrace{mn, initial, std::move(steps)};
}

}  // namespace mmlab
