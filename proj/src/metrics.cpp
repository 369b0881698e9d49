#include "mmlab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mmlab/error.hpp"

namespace mmlab {

std::string_view handover_kind_name(HandoverKind k) {
  switch (k) {
    case HandoverKind::FlatMip6: return "flat_mip6";
    case HandoverKind::IntraMap: return "intra_map";
    case HandoverKind::InterMap: return "inter_map";
    case HandoverKind::FallbackRemain: return "fallback_remain";
  }
  return "?";
}

std::string_view disturbance_name(DisturbanceClass c) {
  switch (c) {
    case DisturbanceClass::Tolerable: return "tolerable";
    case DisturbanceClass::Degraded: return "degraded";
    case DisturbanceClass::Interrupt: return "interrupt";
  }
  return "?";
}

DisturbanceClass classify(SimTime gap) {
  if (gap < kTolerableGap) return DisturbanceClass::Tolerable;
  if (gap > kInterruptGap) return DisturbanceClass::Interrupt;
  return DisturbanceClass::Degraded;
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Delivered: return "delivered";
    case Outcome::Lost: return "lost";
    case Outcome::InFlight: return "in_flight";
  }
  return "?";
}

std::size_t DeliveryLedger::add_stream(const StreamKey& key, NodeId source_node, SimTime interval) {
  if (auto it = stream_index_.find(key); it != stream_index_.end()) return it->second;
  streams_.push_back(StreamInfo{key, source_node, interval, 0});
  stream_index_[key] = streams_.size() - 1;
  return streams_.size() - 1;
}

std::optional<std::size_t> DeliveryLedger::find_stream(const StreamKey& key) const {
  auto it = stream_index_.find(key);
  if (it == stream_index_.end()) return std::nullopt;
  return it->second;
}

void DeliveryLedger::expect(std::uint64_t uid, NodeId receiver, std::size_t stream, std::uint64_t seq,
                            SimTime sent_at) {
  const auto k = key(uid, receiver);
  if (index_.count(k)) return;
  PacketOutcome o;
  o.uid = uid;
  o.receiver = receiver;
  o.stream = stream;
  o.seq = seq;
  o.sent_at = sent_at;
  entries_.push_back(std::move(o));
  index_[k] = entries_.size() - 1;
}

PacketOutcome* DeliveryLedger::get(std::uint64_t uid, NodeId receiver) {
  auto it = index_.find(key(uid, receiver));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const PacketOutcome* DeliveryLedger::find(std::uint64_t uid, NodeId receiver) const {
  auto it = index_.find(key(uid, receiver));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

void DeliveryLedger::copy_sent(std::uint64_t uid, NodeId receiver) {
  if (auto* o = get(uid, receiver)) {
    ++o->live_copies;
    ++o->copies;
  }
}

void DeliveryLedger::copy_ended(std::uint64_t uid, NodeId receiver) {
  if (auto* o = get(uid, receiver)) {
    if (o->live_copies == 0) {
      ++underflows_;
    } else {
      --o->live_copies;
    }
  }
}

void DeliveryLedger::lost(std::uint64_t uid, NodeId receiver, LossReason why, SimTime at) {
  if (auto* o = get(uid, receiver)) {
    o->reason = why;
    o->reason_at = at;
  }
}

bool DeliveryLedger::delivered(std::uint64_t uid, NodeId receiver, SimTime at, const Address& app_source,
                               const std::vector<NodeId>& via) {
  auto* o = get(uid, receiver);
  if (!o) return false;
  if (o->delivered) {
    ++o->duplicates;
    return false;
  }
  o->delivered = true;
  o->delivered_at = at;
  o->app_source = app_source;
  o->via = via;
  return true;
}

AuditResult DeliveryLedger::audit() const {
  AuditResult r;
  r.entries = entries_.size();
  for (const auto& o : entries_) {
    switch (o.outcome()) {
      case Outcome::Delivered: ++r.delivered; break;
      case Outcome::InFlight: ++r.in_flight; break;
      case Outcome::Lost:
        ++r.lost;
        if (o.reason == LossReason::None || o.reason == LossReason::Unaccounted) {
          ++r.unaccounted;
          if (r.problems.size() < 10) {
            r.problems.push_back("uid " + std::to_string(o.uid) + " to node " + std::to_string(o.receiver) +
                                 " vanished without a loss reason");
          }
        }
        break;
    }
  }
  if (underflows_ > 0) r.problems.push_back(std::to_string(underflows_) + " copy count underflows");
  r.ok = r.unaccounted == 0 && underflows_ == 0;
  return r;
}

SimTime mean_abs_jitter(const std::vector<SimTime>& delays) {
  if (delays.size() < 2) return SimTime{};
  std::int64_t sum = 0;
  for (std::size_t i = 1; i < delays.size(); ++i) sum += std::llabs((delays[i] - delays[i - 1]).count());
  return SimTime::us(sum / static_cast<std::int64_t>(delays.size() - 1));
}

StreamStats stream_stats(const DeliveryLedger& ledger, const StreamKey& stream, NodeId receiver) {
  auto idx = ledger.find_stream(stream);
  if (!idx) throw Error(Errc::UnknownStream, "no such stream");
  const StreamInfo& info = ledger.streams()[*idx];
  StreamStats s;
  s.stream = stream;
  s.receiver = receiver;
  s.emitted = info.emitted;
  std::vector<const PacketOutcome*> got;
  bool any = false;
  for (const auto& o : ledger.entries()) {
    if (o.stream != *idx || o.receiver != receiver) continue;
    any = true;
    switch (o.outcome()) {
      case Outcome::Delivered:
        ++s.delivered;
        got.push_back(&o);
        break;
      case Outcome::Lost: ++s.lost; break;
      case Outcome::InFlight: ++s.in_flight; break;
    }
  }
  if (!any) throw Error(Errc::UnknownStream, "receiver " + std::to_string(receiver) + " is not on the stream");
  std::sort(got.begin(), got.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
  std::vector<SimTime> delays;
  std::int64_t total = 0;
  for (const auto* o : got) {
    delays.push_back(o->delay());
    total += o->delay().count();
    s.max_delay = std::max(s.max_delay, o->delay());
  }
  if (!got.empty()) s.mean_delay = SimTime::us(total / static_cast<std::int64_t>(got.size()));
  s.jitter = mean_abs_jitter(delays);
  std::vector<SimTime> times;
  for (const auto* o : got) times.push_back(o->delivered_at);
  std::sort(times.begin(), times.end());
  for (std::size_t i = 1; i < times.size(); ++i) {
    SimTime g = times[i] - times[i - 1] - info.interval;
    s.max_gap = std::max(s.max_gap, g);
  }
  return s;
}

SimTime percentile(std::vector<SimTime> v, double p) {
  if (v.empty()) return SimTime{};
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

FrequencyReport handover_report(const std::vector<HandoverRecord>& records) {
  FrequencyReport r;
  std::map<HandoverKind, std::vector<SimTime>> gaps;
  for (HandoverKind k : kAllHandoverKinds) r.per_kind[k] = 0;
  for (const auto& h : records) {
    ++r.total_moves;
    ++r.per_kind[h.kind];
    if (h.kind == HandoverKind::FlatMip6 || h.kind == HandoverKind::InterMap) ++r.global_handovers;
    r.global_signaling += h.global_signaling_msgs;
    r.local_signaling += h.local_signaling_msgs;
    if (h.completed) gaps[h.kind].push_back(h.gap_excl_l2);
  }
  for (auto& [k, v] : gaps) {
    GapSummary g;
    g.count = v.size();
    g.p50 = percentile(v, 50);
    g.p90 = percentile(v, 90);
    g.max = percentile(v, 100);
    for (SimTime t : v) ++g.classes[static_cast<std::size_t>(classify(t))];
    r.gaps[k] = g;
  }
  r.global_ratio = r.total_moves ? static_cast<double>(r.global_handovers) / static_cast<double>(r.total_moves) : 0.0;
  return r;
}

nlohmann::json to_json(const FrequencyReport& r) {
  nlohmann::json j;
  j["total_moves"] = r.total_moves;
  for (const auto& [k, n] : r.per_kind) j["counts"][std::string(handover_kind_name(k))] = n;
  j["global_handovers"] = r.global_handovers;
  j["global_ratio"] = r.global_ratio;
  j["global_signaling"] = r.global_signaling;
  j["local_signaling"] = r.local_signaling;
  j["gaps"] = nlohmann::json::object();
  for (const auto& [k, g] : r.gaps) {
    j["gaps"][std::string(handover_kind_name(k))] = {
        {"count", g.count},
        {"p50_ms", g.p50.millis()},
        {"p90_ms", g.p90.millis()},
        {"max_ms", g.max.millis()},
        {"tolerable", g.classes[0]},
        {"degraded", g.classes[1]},
        {"interrupt", g.classes[2]},
    };
  }
  return j;
}

nlohmann::json to_json(const StreamStats& s, const std::string& source, const std::string& receiver) {
  return {{"source", source},
          {"group", s.stream.group.host},
          {"receiver", receiver},
          {"emitted", s.emitted},
          {"delivered", s.delivered},
          {"lost", s.lost},
          {"in_flight", s.in_flight},
          {"mean_delay_ms", s.mean_delay.millis()},
          {"jitter_ms", s.jitter.millis()},
          {"max_gap_ms", s.max_gap.millis()},
          {"max_delay_ms", s.max_delay.millis()}};
}

}  // namespace mmlab
