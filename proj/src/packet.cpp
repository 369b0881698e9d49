#include "mmlab/packet.hpp"

#include "mmlab/error.hpp"

namespace mmlab {

bool Packet::same_datagram(const Packet& o) const {
  return kind == o.kind && logical_src == o.logical_src && net_src == o.net_src && net_dst == o.net_dst &&
         seq == o.seq && sent_at == o.sent_at && encap_stack == o.encap_stack && dst_option == o.dst_option &&
         payload_bytes == o.payload_bytes;
}

Packet encapsulate(Packet p, const TunnelHeader& header) {
  if (p.encap_stack.size() >= Packet::kMaxTunnelDepth) {
    throw Error(Errc::TunnelDepthExceeded, "tunnel stack already at depth " + std::to_string(p.encap_stack.size()));
  }
  p.encap_stack.push_back(Packet::Frame{header, p.net_src, p.net_dst});
  p.net_src = header.entry;
  p.net_dst = header.exit;
  return p;
}

Packet decapsulate(Packet p) {
  if (p.encap_stack.empty()) return p;
  const Packet::Frame f = p.encap_stack.back();
  p.encap_stack.pop_back();
  p.net_src = f.inner_src;
  p.net_dst = f.inner_dst;
  return p;
}

Address application_source(const Packet& p) {
  if (p.dst_option) return p.dst_option->home;
  if (!p.encap_stack.empty()) return p.encap_stack.front().inner_src;
  return p.net_src;
}

}  // namespace mmlab
