#include "mmlab/simkernel.hpp"

#include <cmath>
#include <ostream>

#include "mmlab/error.hpp"

namespace mmlab {

namespace {

void append_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          static const char* hex = "0123456789abcdef";
          out += "\\u00";
          out += hex[(c >> 4) & 0xf];
          out += hex[c & 0xf];
        } else {
          out += c;
        }
    }
  }
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::SchedulingInPast: return "SchedulingInPast";
    case Errc::UnknownDistribution: return "UnknownDistribution";
    case Errc::Unreachable: return "Unreachable";
    case Errc::UnassignedAddress: return "UnassignedAddress";
    case Errc::TunnelDepthExceeded: return "TunnelDepthExceeded";
    case Errc::BindingRefused: return "BindingRefused";
    case Errc::NoBinding: return "NoBinding";
    case Errc::NotAMember: return "NotAMember";
    case Errc::NoTree: return "NoTree";
    case Errc::NoMapAdvertised: return "NoMapAdvertised";
    case Errc::MulticastUnaware: return "MulticastUnaware";
    case Errc::NotAssociated: return "NotAssociated";
    case Errc::PreviousMapUnreachable: return "PreviousMapUnreachable";
    case Errc::RateOutOfRange: return "RateOutOfRange";
    case Errc::NonMonotoneTimes: return "NonMonotoneTimes";
    case Errc::RepeatedSubnet: return "RepeatedSubnet";
    case Errc::UnknownStream: return "UnknownStream";
    case Errc::InvalidEmail: return "InvalidEmail";
    case Errc::NotRegistered: return "NotRegistered";
    case Errc::SessionMismatch: return "SessionMismatch";
    case Errc::NoMxRecord: return "NoMxRecord";
    case Errc::DirectoryUnreachable: return "DirectoryUnreachable";
    case Errc::Expired: return "Expired";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::AuditFailure: return "AuditFailure";
  }
  return "Unknown";
}

std::string format_trace_line(SimTime t, std::string_view node, std::string_view kind, std::string_view detail) {
  std::string line;
  line.reserve(48 + node.size() + kind.size() + detail.size());
  line += "{\"t_us\":";
  line += std::to_string(t.count());
  line += ",\"node\":\"";
  append_escaped(line, node);
  line += "\",\"kind\":\"";
  append_escaped(line, kind);
  line += "\",\"detail\":\"";
  append_escaped(line, detail);
  line += "\"}";
  return line;
}

void JsonlTrace::record(SimTime t, std::string_view node, std::string_view kind, std::string_view detail) {
  out_ << format_trace_line(t, node, kind, detail) << '\n';
}

void MemoryTrace::record(SimTime t, std::string_view node, std::string_view kind, std::string_view detail) {
  std::string line = format_trace_line(t, node, kind, detail);
  digest_ = fnv1a(line, digest_);
  digest_ = fnv1a("\n", digest_);
  ++count_;
  if (keep_) lines_.push_back(std::move(line));
}

DistributionSpec DistributionSpec::from_name(std::string_view name, double a, double b) {
  if (name == "uniform") return uniform(a, b);
  if (name == "exponential") return exponential(a);
  if (name == "constant" || name == "deterministic") return constant(a);
  throw Error(Errc::UnknownDistribution, std::string(name));
}

RandomStream::RandomStream(std::uint64_t seed, std::string label)
    : label_(std::move(label)), gen_(splitmix64(seed ^ splitmix64(fnv1a(label_)))) {}

double RandomStream::uniform01() {
  // 53 high bits -> [0, 1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

std::size_t RandomStream::pick(std::size_t n) {
  if (n == 0) return 0;
  auto k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

double RandomStream::draw(const DistributionSpec& dist) {
  switch (dist.kind) {
    case DistributionKind::Constant:
      return dist.a;
    case DistributionKind::Uniform:
      return dist.a + (dist.b - dist.a) * uniform01();
    case DistributionKind::Exponential:
      return -dist.a * std::log1p(-uniform01());
  }
  throw Error(Errc::UnknownDistribution, "unhandled kind");
}

void Engine::set_trace(TraceSink* sink, std::function<std::string(NodeId)> node_name) {
  trace_ = sink;
  node_name_ = std::move(node_name);
}

std::string Engine::name_of(NodeId n) const {
  if (n == kNoNode) return "-";
  if (node_name_) return node_name_(n);
  return std::to_string(n);
}

EventHandle Engine::schedule(SimTime at, NodeId node, std::string kind, Action action, std::string detail) {
  if (at < now_) {
    throw Error(Errc::SchedulingInPast, "fire_at " + std::to_string(at.count()) + "us < now " +
                                            std::to_string(now_.count()) + "us");
  }
  const std::uint64_t seq = next_seq_++;
  queue_.push(Key{at, seq});
  pending_.emplace(seq, Pending{node, std::move(kind), std::move(detail), std::move(action)});
  return EventHandle{seq};
}

bool Engine::cancel(EventHandle handle) { return pending_.erase(handle.seq) > 0; }

RunSummary Engine::run(SimTime until) {
  RunSummary summary;
  while (!queue_.empty()) {
    const Key top = queue_.top();
    if (top.at > until) break;
    queue_.pop();
    auto it = pending_.find(top.seq);
    if (it == pending_.end()) continue;  // cancelled
    Pending ev = std::move(it->second);
    pending_.erase(it);
    now_ = top.at;
    ++executed_;
    ++summary.events_executed;
    if (trace_) trace_->record(now_, name_of(ev.node), ev.kind, ev.detail);
    if (ev.action) ev.action();
  }
  if (until != SimTime::max()) now_ = std::max(now_, until);
  summary.clock = now_;
  summary.events_pending = pending_.size();
  return summary;
}

void Engine::note(NodeId node, std::string_view kind, std::string_view detail) {
  if (trace_) trace_->record(now_, name_of(node), kind, detail);
}

}  // namespace mmlab
