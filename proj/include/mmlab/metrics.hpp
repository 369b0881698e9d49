#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mmlab/address.hpp"
#include "mmlab/network.hpp"
#include "mmlab/simkernel.hpp"

namespace mmlab {

enum class HandoverKind { FlatMip6, IntraMap, InterMap, FallbackRemain };
std::string_view handover_kind_name(HandoverKind k);
inline constexpr std::array kAllHandoverKinds{HandoverKind::FlatMip6, HandoverKind::IntraMap, HandoverKind::InterMap,
                                              HandoverKind::FallbackRemain};

enum class DisturbanceClass { Tolerable, Degraded, Interrupt };
std::string_view disturbance_name(DisturbanceClass c);

/// tolerable [0, 100 ms), degraded [100 ms, 300 ms], interrupt above.
DisturbanceClass classify(SimTime gap);

struct HandoverRecord {
  std::size_t index = 0;
  NodeId mn = kNoNode;
  HandoverKind kind = HandoverKind::FlatMip6;
  SubnetId from_subnet = 0;
  SubnetId to_subnet = 0;
  NodeId map_before = kNoNode;
  NodeId map_after = kNoNode;
  SimTime l2_start;
  SimTime l2_end;
  SimTime addr_ready;
  SimTime phase_complete;
  SimTime l3_complete;
  std::optional<SimTime> last_before;  // last application delivery before l2_start
  SimTime gap_incl_l2;
  SimTime gap_excl_l2;
  bool listener = false;
  bool completed = false;  // false when the next move cut the handover short
  std::uint64_t packets_lost = 0;
  std::uint64_t packets_duplicated = 0;
  std::uint64_t global_signaling_msgs = 0;
  std::uint64_t local_signaling_msgs = 0;
};

struct StreamKey {
  Address source;  // application-visible source (home address for mobiles)
  Address group;
  auto operator<=>(const StreamKey&) const = default;
};

struct StreamInfo {
  StreamKey key;
  NodeId source_node = kNoNode;
  SimTime interval;
  std::uint64_t emitted = 0;
};

enum class Outcome { Delivered, Lost, InFlight };
std::string_view outcome_name(Outcome o);

/// Per (packet, intended receiver) accounting. Each entry ends the run as
/// exactly one of delivered, lost with a reason, or still in flight.
struct PacketOutcome {
  std::uint64_t uid = 0;
  NodeId receiver = kNoNode;
  std::size_t stream = 0;
  std::uint64_t seq = 0;
  SimTime sent_at;
  bool delivered = false;
  SimTime delivered_at;
  Address app_source;
  std::vector<NodeId> via;  // path of the delivered copy
  std::uint32_t live_copies = 0;
  std::uint32_t copies = 0;
  std::uint32_t duplicates = 0;
  LossReason reason = LossReason::None;
  SimTime reason_at;

  Outcome outcome() const {
    if (delivered) return Outcome::Delivered;
    if (live_copies > 0) return Outcome::InFlight;
    return Outcome::Lost;
  }
  SimTime delay() const { return delivered_at - sent_at; }
};

struct AuditResult {
  bool ok = true;
  std::uint64_t entries = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t unaccounted = 0;
  std::vector<std::string> problems;
};

class DeliveryLedger {
 public:
  std::size_t add_stream(const StreamKey& key, NodeId source_node, SimTime interval);
  std::optional<std::size_t> find_stream(const StreamKey& key) const;
  const std::vector<StreamInfo>& streams() const { return streams_; }
  void count_emitted(std::size_t stream) { ++streams_.at(stream).emitted; }

  void expect(std::uint64_t uid, NodeId receiver, std::size_t stream, std::uint64_t seq, SimTime sent_at);
  bool expected(std::uint64_t uid, NodeId receiver) const { return index_.count(key(uid, receiver)) > 0; }
  void copy_sent(std::uint64_t uid, NodeId receiver);
  void copy_ended(std::uint64_t uid, NodeId receiver);
  /// Records why a copy toward receiver died. The last reason wins unless
  /// another copy delivers.
  void lost(std::uint64_t uid, NodeId receiver, LossReason why, SimTime at);
  /// Returns false for a duplicate (already delivered).
  bool delivered(std::uint64_t uid, NodeId receiver, SimTime at, const Address& app_source,
                 const std::vector<NodeId>& via);

  const PacketOutcome* find(std::uint64_t uid, NodeId receiver) const;
  const std::vector<PacketOutcome>& entries() const { return entries_; }

  /// Conservation check: every entry is delivered, lost with a reason, or in
  /// flight; live copy counts never went negative.
  AuditResult audit() const;

 private:
  static std::uint64_t key(std::uint64_t uid, NodeId r) { return (uid << 20) ^ r; }
  PacketOutcome* get(std::uint64_t uid, NodeId receiver);

  std::vector<StreamInfo> streams_;
  std::map<StreamKey, std::size_t> stream_index_;
  std::vector<PacketOutcome> entries_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::uint64_t underflows_ = 0;
};

struct StreamStats {
  StreamKey stream;
  NodeId receiver = kNoNode;
  std::uint64_t emitted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  std::uint64_t in_flight = 0;
  SimTime mean_delay;
  SimTime jitter;
  SimTime max_gap;
  SimTime max_delay;
};

/// Per-receiver statistics for one stream, in delivery order of seq.
/// Throws UnknownStream.
StreamStats stream_stats(const DeliveryLedger& ledger, const StreamKey& stream, NodeId receiver);

/// Jitter as the mean absolute difference of consecutive delays.
SimTime mean_abs_jitter(const std::vector<SimTime>& delays);

struct GapSummary {
  std::size_t count = 0;
  SimTime p50;
  SimTime p90;
  SimTime max;
  std::array<std::size_t, 3> classes{};  // tolerable, degraded, interrupt
};

struct FrequencyReport {
  std::size_t total_moves = 0;
  std::map<HandoverKind, std::size_t> per_kind;
  std::map<HandoverKind, GapSummary> gaps;  // completed handovers, gap excluding layer 2
  std::size_t global_handovers = 0;        // moves visible outside the MAP domain
  double global_ratio = 0.0;
  std::uint64_t global_signaling = 0;
  std::uint64_t local_signaling = 0;
};

/// Nearest-rank percentile (p in [0, 100]) of an unsorted sample.
SimTime percentile(std::vector<SimTime> v, double p);

FrequencyReport handover_report(const std::vector<HandoverRecord>& records);

nlohmann::json to_json(const FrequencyReport& r);
nlohmann::json to_json(const StreamStats& s, const std::string& source, const std::string& receiver);

}  // namespace mmlab
