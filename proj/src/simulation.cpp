#include "mmlab/simulation.hpp"

#include <algorithm>

#include "mmlab/error.hpp"

namespace mmlab {

std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Mip6Bt: return "mip6_bt";
    case Protocol::Hmip: return "hmip";
    case Protocol::MHmip: return "m_hmip";
  }
  return "?";
}

std::optional<Protocol> protocol_from_name(std::string_view s) {
  if (s == "mip6_bt") return Protocol::Mip6Bt;
  if (s == "hmip") return Protocol::Hmip;
  if (s == "m_hmip") return Protocol::MHmip;
  return std::nullopt;
}

bool SeqWindow::accept(std::uint64_t seq) {
  if (any_ && seq + width_ <= highest_) return false;
  if (!seen_.insert(seq).second) return false;
  if (!any_ || seq > highest_) {
    highest_ = seq;
    any_ = true;
    while (!seen_.empty() && *seen_.begin() + width_ <= highest_) seen_.erase(seen_.begin());
  }
  return true;
}

namespace {

std::string addr_str(const Topology& topo, const Address& a) { return format_address(topo, a); }

}  // namespace

struct Simulation::Impl : CopyObserver {
  enum class Await { None, HaAck, LocalAck };

  struct Association {
    Address key;  // RCoA at a MAP, home address at an HA
    std::optional<Address> forward_to;
    SimTime forward_until = SimTime::max();
    std::uint64_t generation = 0;
  };

  struct Proxy {
    NodeId node = kNoNode;
    bool is_map = false;
    mip6::BindingCache cache;
    std::map<NodeId, Association> assoc;
    std::map<Address, std::set<NodeId>> listeners;
    std::set<Address> unaware;
    std::uint64_t next_generation = 1;
  };

  struct Mobile {
    NodeId id = kNoNode;
    NodeId ha = kNoNode;
    Address home;
    SubnetId subnet = 0;
    bool attached = true;
    Address coa;
    std::optional<Address> rcoa;
    NodeId map = kNoNode;
    bool flat = false;
    mip6::HandoffPhase phase;
    std::uint64_t epoch = 0;
    Await await = Await::None;
    bool adopting = false;
    std::set<Address> listen;
    std::set<Address> send;
    mhmip::MoveWindow window;
    std::optional<std::size_t> record;
    std::vector<std::size_t> records;
    NodeId send_anchor = kNoNode;
    Address send_source;
    std::vector<Address> pending_sources;
    std::optional<SimTime> last_delivery;
  };

  struct GroupState {
    std::set<NodeId> anchors;
    std::set<Address> sources;
  };

  struct Stream {
    std::size_t ledger_index = 0;
    std::vector<SimTime> times;
    std::size_t next = 0;
    std::uint64_t seq = 0;
  };

  Simulation& s;
  Engine& eng;
  Topology& topo;
  AddressTable& table;
  Network& net;
  mcast::MulticastRouting& mc;
  const SimConfig& cfg;
  DeliveryLedger& ledger;
  std::vector<HandoverRecord>& records;

  std::map<NodeId, Mobile> mobiles;
  std::map<NodeId, Proxy> proxies;
  std::map<NodeId, mip6::BindingCache> cn_caches;
  std::map<Address, GroupState> groups;
  std::set<std::tuple<Address, Address, NodeId>> failed_joins;
  std::map<Address, std::vector<NodeId>> receivers;  // intended receivers per group
  std::set<NodeId> fixed_listeners;
  std::map<std::pair<NodeId, std::size_t>, SeqWindow> dedup;
  std::vector<Stream> streams;
  std::uint64_t next_uid = 0;
  SignalingCounts sig;
  std::uint64_t app_deliveries = 0;
  std::uint64_t dup_filtered = 0;
  std::uint64_t dup_passed = 0;

  Impl(Simulation& sim)
      : s(sim),
        eng(sim.engine_),
        topo(sim.topo_),
        table(sim.table_),
        net(sim.net_),
        mc(sim.mcast_),
        cfg(sim.cfg_),
        ledger(sim.ledger_),
        records(sim.records_) {}

  // ---- bookkeeping -------------------------------------------------------

  void copy_sent(const Packet& p) override {
    if (p.kind != PacketKind::Data) return;
    for (NodeId r : p.targets) ledger.copy_sent(p.uid, r);
  }
  void copy_ended(const Packet& p) override {
    if (p.kind != PacketKind::Data) return;
    for (NodeId r : p.targets) ledger.copy_ended(p.uid, r);
  }

  void lose_one(std::uint64_t uid, NodeId r, LossReason why) { ledger.lost(uid, r, why, eng.now()); }

  void lose(const Packet& p, LossReason why) {
    if (p.kind != PacketKind::Data) {
      eng.note(kNoNode, "signal_lost", std::string(loss_reason_name(why)));
      return;
    }
    for (NodeId r : p.targets) lose_one(p.uid, r, why);
  }

  Mobile& mobile(NodeId id) {
    auto it = mobiles.find(id);
    if (it == mobiles.end()) throw Error(Errc::ValidationError, "node " + topo.name(id) + " is not a mobile node");
    return it->second;
  }
  const Mobile& mobile(NodeId id) const { return const_cast<Impl*>(this)->mobile(id); }
  Proxy* proxy(NodeId n) {
    auto it = proxies.find(n);
    return it == proxies.end() ? nullptr : &it->second;
  }
  HandoverRecord* current_record(Mobile& m) { return m.record ? &records[*m.record] : nullptr; }
  Address addr(NodeId n) const { return topo.node_address(n); }
  bool hierarchical() const { return cfg.protocol != Protocol::Mip6Bt; }

  // ---- group membership --------------------------------------------------

  SimTime join_one(NodeId anchor, const Address& g, const Address& src) {
    try {
      SimTime t = mc.join(g, anchor, src);
      failed_joins.erase({g, src, anchor});
      return t;
    } catch (const Error& e) {
      if (e.code() != Errc::Unreachable) throw;
      failed_joins.insert({g, src, anchor});
      eng.note(anchor, "join_failed", "group=" + std::to_string(g.host) + " source=" + addr_str(topo, src));
      return eng.now();
    }
  }

  void anchor_join(NodeId anchor, const Address& g) {
    GroupState& gs = groups[g];
    if (!gs.anchors.insert(anchor).second) return;
    for (const Address& src : gs.sources) join_one(anchor, g, src);
  }

  void anchor_leave(NodeId anchor, const Address& g) {
    GroupState& gs = groups[g];
    if (!gs.anchors.erase(anchor)) return;
    for (const Address& src : gs.sources) {
      if (mc.is_member(g, anchor, src)) mc.leave(g, anchor, src);
      failed_joins.erase({g, src, anchor});
    }
  }

  SimTime source_add(const Address& g, const Address& src) {
    GroupState& gs = groups[g];
    SimTime ready = eng.now();
    if (!gs.sources.insert(src).second) return ready;
    for (NodeId a : gs.anchors) ready = std::max(ready, join_one(a, g, src));
    eng.note(topo.subnet_node(src.subnet), "source_add",
             "group=" + std::to_string(g.host) + " source=" + addr_str(topo, src) +
                 " ready_us=" + std::to_string(ready.count()));
    return ready;
  }

  void source_remove(const Address& g, const Address& src) {
    GroupState& gs = groups[g];
    if (!gs.sources.erase(src)) return;
    mc.remove_tree(g, src);
    for (NodeId a : gs.anchors) failed_joins.erase({g, src, a});
    eng.note(topo.subnet_node(src.subnet), "source_remove",
             "group=" + std::to_string(g.host) + " source=" + addr_str(topo, src));
  }

  void proxy_listen(Proxy& p, Mobile& m) {
    if (!p.assoc.count(m.id)) {
      Association a;
      a.key = p.is_map ? m.rcoa.value_or(m.coa) : m.home;
      a.generation = p.next_generation++;
      p.assoc[m.id] = a;
    }
    for (const Address& g : m.listen) {
      auto& set = p.listeners[g];
      if (!set.insert(m.id).second || set.size() > 1) continue;
      if (p.is_map && !topo.multicast_capable(p.node)) {
        p.unaware.insert(g);
        eng.note(p.node, "proxy_join_refused", "MulticastUnaware group=" + std::to_string(g.host));
        continue;
      }
      anchor_join(p.node, g);
    }
  }

  void proxy_release(Proxy& p, NodeId mn, bool erase_binding) {
    for (auto& [g, set] : p.listeners) {
      if (!set.erase(mn) || !set.empty()) continue;
      if (p.unaware.erase(g) == 0) anchor_leave(p.node, g);
    }
    auto it = p.assoc.find(mn);
    if (it != p.assoc.end()) {
      if (erase_binding) p.cache.erase(it->second.key);
      p.assoc.erase(it);
    }
    eng.note(p.node, "proxy_release", topo.name(mn));
  }

  std::optional<NodeId> anchor_of(NodeId r, const Address& g) const {
    if (fixed_listeners.count(r)) return r;
    for (const auto& [n, p] : proxies) {
      auto it = p.listeners.find(g);
      if (it != p.listeners.end() && it->second.count(r)) return n;
    }
    return std::nullopt;
  }

  LossReason uncovered_reason(NodeId r, const Address& g, const Address& src) const {
    auto anchor = anchor_of(r, g);
    if (!anchor) {
      auto it = mobiles.find(r);
      if (it != mobiles.end() && !it->second.phase.can_communicate()) return LossReason::HandoffInProgress;
      return LossReason::NoBinding;
    }
    if (failed_joins.count({g, src, *anchor})) return LossReason::MulticastUnaware;
    if (auto it = proxies.find(*anchor); it != proxies.end() && it->second.unaware.count(g)) {
      return LossReason::MulticastUnaware;
    }
    return LossReason::NoTree;
  }

  // ---- forwarding --------------------------------------------------------

  void send_unicast(Packet p, NodeId from) {
    Path path;
    try {
      path = net.route(from, p.net_dst);
    } catch (const Error& e) {
      LossReason why = e.code() == Errc::UnassignedAddress ? LossReason::StaleBinding : LossReason::Unreachable;
      eng.note(from, "drop", std::string(loss_reason_name(why)) + " uid=" + std::to_string(p.uid));
      lose(p, why);
      return;
    }
    net.forward(
        std::move(p), path, [this](Packet&& q, NodeId at) { receive(std::move(q), at); },
        [this](const Packet& q, NodeId, LossReason why) { lose(q, why); });
  }

  void tunnel(Packet p, NodeId from, const Address& exit, RouteTag tag) {
    try {
      p = encapsulate(std::move(p), TunnelHeader{addr(from), exit});
    } catch (const Error&) {
      eng.note(from, "drop", "TunnelDepthExceeded uid=" + std::to_string(p.uid));
      lose(p, LossReason::TunnelDepthExceeded);
      return;
    }
    if (tag != RouteTag::Tunnel || p.route == RouteTag::Native) p.route = tag;
    send_unicast(std::move(p), from);
  }

  void inject(Packet p, NodeId at) {
    const Address g = p.net_dst;
    const Address src = p.net_src;
    if (!mc.tree(g, src)) {
      eng.note(at, "drop", "NoTree uid=" + std::to_string(p.uid));
      lose(p, LossReason::NoTree);
      return;
    }
    std::set<NodeId> covered;
    auto targets_for = [&](NodeId member, const Packet& pk) {
      std::vector<NodeId> out;
      const Proxy* px = proxy(member);
      const std::set<NodeId>* served = nullptr;
      if (px) {
        auto it = px->listeners.find(g);
        if (it != px->listeners.end()) served = &it->second;
      }
      for (NodeId r : pk.targets) {
        if ((r == member && fixed_listeners.count(r)) || (served && served->count(r))) {
          out.push_back(r);
          covered.insert(r);
        }
      }
      return out;
    };
    p.route = RouteTag::Native;
    mc.deliver(
        p, [this](Packet&& q, NodeId member) { mcast_arrival(std::move(q), member); },
        [this](const Packet& q, NodeId, LossReason why) { lose(q, why); }, targets_for);
    for (NodeId r : p.targets) {
      if (!covered.count(r)) lose_one(p.uid, r, uncovered_reason(r, g, src));
    }
  }

  void mcast_arrival(Packet&& p, NodeId member) {
    const Address g = p.net_dst;
    for (NodeId r : p.targets) {
      if (r == member) {
        Packet copy = p;
        copy.targets = {r};
        app_deliver(copy, r);
        continue;
      }
      Proxy* px = proxy(member);
      if (!px || !px->listeners.count(g) || !px->listeners.at(g).count(r)) {
        lose_one(p.uid, r, LossReason::NoBinding);
        continue;
      }
      Packet copy = p;
      copy.targets = {r};
      proxy_deliver(*px, r, std::move(copy));
    }
  }

  void proxy_deliver(Proxy& px, NodeId mn, Packet p) {
    auto it = px.assoc.find(mn);
    if (it == px.assoc.end()) {
      lose(p, LossReason::NoBinding);
      return;
    }
    const Association& a = it->second;
    const SimTime now = eng.now();
    const auto* live = px.cache.lookup(a.key, now);
    const bool forwarding = a.forward_to && now < a.forward_until;
    if (!live && !forwarding) {
      eng.note(px.node, "drop", "NoBinding uid=" + std::to_string(p.uid));
      lose(p, LossReason::NoBinding);
      return;
    }
    if (live) tunnel(p, px.node, live->care_of, RouteTag::Tunnel);
    if (forwarding) tunnel(std::move(p), px.node, *a.forward_to, live ? RouteTag::Bicast : RouteTag::Forwarded);
  }

  void receive(Packet&& p, NodeId at) {
    if (topo.role(at) == Role::Mobile) {
      mn_receive(std::move(p), at);
      return;
    }
    const Address own = addr(at);
    if (p.net_dst == own) {
      if (p.tunnel_depth() > 0) {
        Packet q = decapsulate(std::move(p));
        if (q.net_dst.is_group()) {
          inject(std::move(q), at);
        } else if (q.net_dst == own) {
          receive(std::move(q), at);
        } else {
          send_unicast(std::move(q), at);
        }
        return;
      }
      if (p.kind != PacketKind::Data) {
        handle_signal(p, at);
        return;
      }
      lose(p, LossReason::Unreachable);
      return;
    }
    Proxy* px = proxy(at);
    if (px && p.net_dst.subnet == topo.node_subnet(at) && p.net_dst.host != 1) {
      // Intercept for an RCoA (MAP) or home address (HA) held here.
      const auto* live = px->cache.lookup(p.net_dst, eng.now());
      if (!live) {
        eng.note(at, "drop", "NoBinding uid=" + std::to_string(p.uid));
        lose(p, LossReason::NoBinding);
        return;
      }
      tunnel(std::move(p), at, live->care_of, RouteTag::Tunnel);
      return;
    }
    lose(p, LossReason::Unreachable);
  }

  void mn_receive(Packet&& p, NodeId mn) {
    while (p.tunnel_depth() > 0) p = decapsulate(std::move(p));
    if (p.kind != PacketKind::Data) {
      mn_signal(p, mn);
      return;
    }
    Mobile& m = mobile(mn);
    if (!m.phase.can_communicate()) {
      eng.note(mn, "drop", "HandoffInProgress uid=" + std::to_string(p.uid));
      lose(p, LossReason::HandoffInProgress);
      return;
    }
    app_deliver(p, mn);
  }

  void app_deliver(const Packet& p, NodeId r) {
    const PacketOutcome* o = ledger.find(p.uid, r);
    if (!o) return;
    const Address app_src = application_source(p);
    const bool fresh = dedup[{r, o->stream}].accept(p.seq);
    const bool first = ledger.delivered(p.uid, r, eng.now(), app_src, p.via);
    if (!fresh) {
      ++dup_filtered;
      eng.note(r, "dup", "uid=" + std::to_string(p.uid) + " seq=" + std::to_string(p.seq));
      return;
    }
    if (!first) ++dup_passed;
    ++app_deliveries;
    eng.note(r, "deliver",
             "uid=" + std::to_string(p.uid) + " seq=" + std::to_string(p.seq) +
                 " delay_us=" + std::to_string((eng.now() - p.sent_at).count()) + " src=" + addr_str(topo, app_src));
    auto it = mobiles.find(r);
    if (it == mobiles.end()) return;
    Mobile& m = it->second;
    m.last_delivery = eng.now();
    if (HandoverRecord* rec = current_record(m); rec && !rec->completed && rec->listener) finish(*rec, eng.now());
  }

  void finish(HandoverRecord& rec, SimTime l3) {
    rec.l3_complete = l3;
    rec.gap_excl_l2 = l3 - rec.l2_end;
    rec.gap_incl_l2 = l3 - (rec.listener && rec.last_before ? *rec.last_before : rec.l2_start);
    rec.completed = true;
    eng.note(rec.mn, "handover_done",
             std::string(handover_kind_name(rec.kind)) + " gap_excl_us=" + std::to_string(rec.gap_excl_l2.count()));
  }

  // ---- signaling ---------------------------------------------------------

  void send_signal(PacketKind kind, NodeId from, const Address& src, const Address& dst, const Signal& sg) {
    Packet p;
    p.kind = kind;
    p.logical_src = src;
    p.net_src = src;
    p.net_dst = dst;
    p.sent_at = eng.now();
    p.signal = sg;
    send_unicast(std::move(p), from);
  }

  Address mn_binding_coa(const Mobile& m) const { return (hierarchical() && !m.flat && m.rcoa) ? *m.rcoa : m.coa; }

  void bu_to_ha(Mobile& m, bool refresh, bool proxy_flag) {
    Signal sg;
    sg.mn = m.id;
    sg.home = m.home;
    sg.care_of = mn_binding_coa(m);
    sg.epoch = m.epoch;
    sg.refresh = refresh;
    sg.proxy = proxy_flag;
    send_signal(PacketKind::BindingUpdate, m.id, m.coa, addr(m.ha), sg);
    count_bu(m, refresh, true);
    if (!refresh && cfg.route_optimization) {
      for (NodeId cn : cfg.correspondents) {
        send_signal(PacketKind::BindingUpdate, m.id, m.coa, addr(cn), sg);
        count_bu(m, false, true);
      }
    }
  }

  void lbu_to_map(Mobile& m, NodeId map, bool refresh, NodeId previous) {
    Signal sg;
    sg.mn = m.id;
    sg.home = m.home;
    sg.care_of = m.coa;
    sg.regional = *m.rcoa;
    sg.previous_map = previous;
    sg.epoch = m.epoch;
    sg.refresh = refresh;
    send_signal(PacketKind::LocalBindingUpdate, m.id, m.coa, addr(map), sg);
    count_bu(m, refresh, false);
  }

  void count_bu(Mobile& m, bool refresh, bool global) {
    if (refresh) {
      ++sig.refresh;
      return;
    }
    HandoverRecord* rec = current_record(m);
    if (global) {
      ++sig.global;
      if (rec) ++rec->global_signaling_msgs;
    } else {
      ++sig.local;
      if (rec) ++rec->local_signaling_msgs;
    }
  }

  void handle_signal(const Packet& p, NodeId at) {
    const Signal sg = p.signal;
    switch (p.kind) {
      case PacketKind::BindingUpdate:
        eng.schedule_in(cfg.timers.bu_processing, at, "bu_process", [this, at, sg] { on_binding_update(at, sg); });
        break;
      case PacketKind::LocalBindingUpdate:
        eng.schedule_in(cfg.timers.bu_processing, at, "lbu_process", [this, at, sg] { on_local_bu(at, sg); });
        break;
      case PacketKind::ReactiveBindingUpdate: on_reactive_bu(at, sg); break;
      default: eng.note(at, "signal_ignored", std::to_string(static_cast<int>(p.kind))); break;
    }
  }

  void on_binding_update(NodeId at, const Signal& sg) {
    Signal ack = sg;
    Mobile& m = mobile(sg.mn);
    if (cn_caches.count(at)) {
      cn_caches.at(at).update(sg.home, sg.care_of, eng.now() + cfg.timers.binding_lifetime);
      eng.note(at, "cn_binding", addr_str(topo, sg.home) + "->" + addr_str(topo, sg.care_of));
      ++sig.acks;
      send_signal(PacketKind::BindingAck, at, addr(at), sg.care_of, ack);
      return;
    }
    Proxy* px = proxy(at);
    if (!px || px->is_map || m.ha != at) {
      ack.refused = true;
      eng.note(at, "binding_refused", topo.name(sg.mn));
      send_signal(PacketKind::BindingAck, at, addr(at), sg.care_of, ack);
      return;
    }
    auto upd = px->cache.update(sg.home, sg.care_of, eng.now() + cfg.timers.binding_lifetime);
    eng.note(at, "ha_binding",
             addr_str(topo, sg.home) + "->" + addr_str(topo, sg.care_of) +
                 (upd == mip6::BindingCache::Update::Refreshed ? " refreshed" : ""));
    if (!sg.refresh) {
      if (cfg.protocol != Protocol::MHmip) {
        proxy_listen(*px, m);
      } else if (sg.proxy) {
        proxy_listen(*px, m);
        for (const Address& g : m.send) source_add(g, m.home);
      } else if (px->assoc.count(m.id)) {
        proxy_release(*px, m.id, false);
      }
    }
    ++sig.acks;
    send_signal(PacketKind::BindingAck, at, addr(at), sg.care_of, ack);
  }

  void on_local_bu(NodeId at, const Signal& sg) {
    Proxy& px = *proxy(at);
    Mobile& m = mobile(sg.mn);
    const SimTime now = eng.now();
    auto& a = px.assoc[sg.mn];
    const bool fresh = !(a.key == sg.regional) || a.generation == 0;
    if (fresh && a.generation != 0) px.cache.erase(a.key);
    a.key = sg.regional;
    a.forward_to.reset();
    a.forward_until = SimTime::max();
    a.generation = px.next_generation++;
    auto upd = px.cache.update(sg.regional, sg.care_of, now + cfg.timers.binding_lifetime);
    eng.note(at, "map_binding",
             addr_str(topo, sg.regional) + "->" + addr_str(topo, sg.care_of) +
                 (upd == mip6::BindingCache::Update::Refreshed ? " refreshed" : ""));
    Signal ack = sg;
    if (cfg.protocol == Protocol::MHmip && !sg.refresh) {
      proxy_listen(px, m);
      if (fresh && !m.send.empty()) {
        SimTime ready = now;
        for (const Address& g : m.send) ready = std::max(ready, source_add(g, sg.regional));
        Signal tr = sg;
        eng.schedule(ready, at, "tree_ready", [this, at, tr] {
          send_signal(PacketKind::TreeReady, at, addr(at), tr.regional, tr);
        });
      }
    }
    ++sig.acks;
    send_signal(PacketKind::LocalBindingAck, at, addr(at), sg.care_of, ack);
  }

  void on_reactive_bu(NodeId at, const Signal& sg) {
    Proxy* px = proxy(at);
    if (!px || !px->assoc.count(sg.mn)) {
      eng.note(at, "reactive_bu_ignored", topo.name(sg.mn));
      return;
    }
    if (!cfg.mhmip.bicast) {
      proxy_release(*px, sg.mn, true);
      return;
    }
    Association& a = px->assoc.at(sg.mn);
    const bool to_map = cfg.mhmip.forward_to_new_map && sg.regional.kind == AddrKind::RegionalCareOf;
    a.forward_to = to_map ? sg.regional : sg.care_of;
    a.forward_until = eng.now() + cfg.mhmip.bicast_duration;
    const std::uint64_t gen = a.generation;
    const NodeId mn = sg.mn;
    eng.note(at, "bicast_start", topo.name(mn) + " to " + addr_str(topo, *a.forward_to));
    eng.schedule(a.forward_until, at, "bicast_end", [this, at, mn, gen] {
      Proxy& p = *proxy(at);
      auto it = p.assoc.find(mn);
      if (it != p.assoc.end() && it->second.generation == gen) proxy_release(p, mn, true);
    });
  }

  void mn_signal(const Packet& p, NodeId mn) {
    Mobile& m = mobile(mn);
    const Signal& sg = p.signal;
    if (p.kind != PacketKind::TreeReady && sg.epoch != m.epoch) {
      eng.note(mn, "stale_signal", std::to_string(sg.epoch));
      return;
    }
    switch (p.kind) {
      case PacketKind::BindingAck:
        if (sg.refused) {
          eng.note(mn, "binding_refused", "");
          return;
        }
        if (sg.refresh) {
          if (p.net_src == addr(m.ha)) schedule_refresh(m);
          return;
        }
        if (p.net_src != addr(m.ha)) return;  // correspondent ack
        if (m.await == Await::HaAck) {
          if (cfg.protocol == Protocol::MHmip && m.flat && !m.send.empty()) switch_sender(m, m.ha, m.home);
          complete(m);
        }
        break;
      case PacketKind::LocalBindingAck:
        if (sg.refresh || m.await != Await::LocalAck) return;
        if (m.adopting && cfg.protocol == Protocol::Hmip) {
          m.await = Await::HaAck;
          bu_to_ha(m, false, false);
          return;
        }
        if (m.adopting) {
          complete(m);
          bu_to_ha(m, false, false);
          if (!cfg.mhmip.bicast && !m.send.empty()) switch_sender(m, m.map, *m.rcoa);
          return;
        }
        complete(m);
        break;
      case PacketKind::TreeReady:
        if (m.rcoa && sg.regional == *m.rcoa && !(m.send_source == sg.regional)) switch_sender(m, m.map, *m.rcoa);
        break;
      default: break;
    }
  }

  void switch_sender(Mobile& m, NodeId anchor, const Address& source) {
    const Address old = m.send_source;
    m.send_anchor = anchor;
    m.send_source = source;
    std::erase(m.pending_sources, source);
    eng.note(m.id, "sender_switch", addr_str(topo, old) + "->" + addr_str(topo, source));
    if (old == source) return;
    schedule_source_removal(m, old);
  }

  void schedule_source_removal(const Mobile& m, const Address& src) {
    const std::set<Address> gs = m.send;
    eng.schedule_in(cfg.mhmip.bicast_duration, topo.subnet_node(src.subnet), "source_retire", [this, gs, src] {
      for (const Address& g : gs) source_remove(g, src);
    });
  }

  void complete(Mobile& m) {
    m.phase.advance(mip6::Phase::Complete, eng.now());
    m.await = Await::None;
    m.adopting = false;
    if (HandoverRecord* rec = current_record(m)) {
      rec->phase_complete = eng.now();
      if (!rec->listener) finish(*rec, eng.now());
    }
    schedule_refresh(m);
  }

  void schedule_refresh(Mobile& m) {
    const SimTime at = eng.now() + SimTime::us(cfg.timers.binding_lifetime.count() * 4 / 5);
    const NodeId id = m.id;
    const std::uint64_t epoch = m.epoch;
    eng.schedule(at, id, "refresh", [this, id, epoch] {
      Mobile& mm = mobile(id);
      if (mm.epoch != epoch || !mm.phase.can_communicate()) return;
      bu_to_ha(mm, true, false);
      if (hierarchical() && !mm.flat) lbu_to_map(mm, mm.map, true, kNoNode);
    });
  }

  // ---- movement ----------------------------------------------------------

  void move(NodeId id, SubnetId subnet) {
    Mobile& m = mobile(id);
    if (!topo.is_access_subnet(subnet)) {
      throw Error(Errc::ValidationError, "subnet " + topo.subnet_name(subnet) + " is not an access subnet");
    }
    if (subnet == m.subnet) throw Error(Errc::RepeatedSubnet, topo.name(id) + " is already on " + topo.subnet_name(subnet));
    HandoverRecord rec;
    rec.index = records.size();
    rec.mn = id;
    rec.from_subnet = m.subnet;
    rec.to_subnet = subnet;
    rec.map_before = m.flat ? kNoNode : m.map;
    rec.l2_start = eng.now();
    rec.last_before = m.last_delivery;
    rec.listener = !m.listen.empty();
    rec.kind = HandoverKind::FlatMip6;
    if (hierarchical()) {
      auto dm = topo.domain_map(subnet);
      rec.kind = dm && !m.flat && *dm == m.map ? HandoverKind::IntraMap : HandoverKind::InterMap;
    }
    records.push_back(rec);
    m.record = rec.index;
    m.records.push_back(rec.index);
    ++m.epoch;
    m.phase.advance(mip6::Phase::L2Handoff, eng.now());
    m.await = Await::None;
    m.adopting = false;
    table.detach(id);
    m.attached = false;
    m.subnet = subnet;
    eng.note(id, "l2_start", topo.subnet_name(rec.from_subnet) + "->" + topo.subnet_name(subnet));
    const std::uint64_t epoch = m.epoch;
    eng.schedule_in(cfg.timers.l2_handoff, id, "l2_attach", [this, id, epoch] { on_attach(id, epoch); });
  }

  void on_attach(NodeId id, std::uint64_t epoch) {
    Mobile& m = mobile(id);
    if (m.epoch != epoch) return;
    table.attach(id, topo.subnet_node(m.subnet));
    m.attached = true;
    m.phase.advance(mip6::Phase::AddrConfig, eng.now());
    records[*m.record].l2_end = eng.now();
    eng.schedule_in(cfg.timers.addr_config(), id, "addr_ready", [this, id, epoch] { on_addr_ready(id, epoch); });
  }

  Address configure_coa(NodeId id, SubnetId subnet) {
    Mobile& m = mobile(id);
    if (m.coa.subnet == subnet) return m.coa;
    Address a{subnet, table.allocate_host(subnet), hierarchical() ? AddrKind::OnLinkCareOf : AddrKind::CareOf};
    table.bind(a, id);
    table.unbind(m.coa);
    m.coa = a;
    eng.note(id, "coa", addr_str(topo, a));
    return a;
  }

  void on_addr_ready(NodeId id, std::uint64_t epoch) {
    Mobile& m = mobile(id);
    if (m.epoch != epoch) return;
    configure_coa(id, m.subnet);
    HandoverRecord& rec = records[*m.record];
    rec.addr_ready = eng.now();
    m.phase.advance(mip6::Phase::BindingUpdatePending, eng.now());
    if (!hierarchical()) {
      rec.kind = HandoverKind::FlatMip6;
      m.await = Await::HaAck;
      bu_to_ha(m, false, true);
      return;
    }
    std::optional<mhmip::MapInfo> info;
    try {
      info = mhmip::map_discover(topo, m.subnet);
    } catch (const Error& e) {
      if (e.code() != Errc::NoMapAdvertised) throw;
      enter_flat(m);
      return;
    }
    if (!m.flat && info->map_id == m.map) {
      rec.kind = HandoverKind::IntraMap;
      rec.map_after = m.map;
      m.await = Await::LocalAck;
      lbu_to_map(m, m.map, false, kNoNode);
      return;
    }
    if (cfg.protocol == Protocol::MHmip && !m.flat) {
      const int recent = m.window.record(rec.l2_start, cfg.mhmip.rapid_window);
      const bool remain =
          cfg.mhmip.fallback &&
          mhmip::fallback_check(*info, recent, cfg.mhmip) == mhmip::FallbackDecision::RemainWithPrevious;
      eng.note(id, "fallback_check",
               std::string(remain ? "remain" : "adopt") + " recent=" + std::to_string(recent) +
                   " capable=" + (info->multicast_capable ? "1" : "0"));
      if (remain) {
        rec.kind = HandoverKind::FallbackRemain;
        rec.map_after = m.map;
        m.await = Await::LocalAck;
        lbu_to_map(m, m.map, false, kNoNode);
        return;
      }
    }
    rec.kind = HandoverKind::InterMap;
    adopt(m, *info);
  }

  void adopt(Mobile& m, const mhmip::MapInfo& info) {
    const NodeId prev = m.flat ? kNoNode : m.map;
    Address rcoa{info.rcoa_prefix, table.allocate_host(info.rcoa_prefix), AddrKind::RegionalCareOf};
    table.bind(rcoa, m.id);
    m.map = info.map_id;
    m.rcoa = rcoa;
    m.flat = false;
    records[*m.record].map_after = m.map;
    m.await = Await::LocalAck;
    m.adopting = true;
    if (cfg.protocol == Protocol::MHmip) {
      for (const Address& stale : m.pending_sources) schedule_source_removal(m, stale);
      m.pending_sources.clear();
      if (!m.send.empty()) m.pending_sources.push_back(rcoa);
    }
    lbu_to_map(m, m.map, false, prev);
    if (cfg.protocol == Protocol::MHmip && prev != kNoNode) reactive_bu(m, prev);
  }

  void reactive_bu(Mobile& m, NodeId prev) {
    Signal sg;
    sg.mn = m.id;
    sg.home = m.home;
    sg.care_of = m.coa;
    sg.regional = m.rcoa.value_or(m.coa);
    sg.epoch = m.epoch;
    try {
      net.route(m.id, addr(prev));
    } catch (const Error&) {
      eng.note(m.id, "reactive_bu_skipped", "PreviousMapUnreachable " + topo.name(prev));
      return;
    }
    send_signal(PacketKind::ReactiveBindingUpdate, m.id, m.coa, addr(prev), sg);
    count_bu(m, false, false);
  }

  void enter_flat(Mobile& m) {
    const NodeId prev = m.flat ? kNoNode : m.map;
    HandoverRecord& rec = records[*m.record];
    rec.kind = HandoverKind::FlatMip6;
    rec.map_after = kNoNode;
    m.flat = true;
    m.map = kNoNode;
    m.rcoa.reset();
    m.await = Await::HaAck;
    bu_to_ha(m, false, true);
    if (cfg.protocol == Protocol::MHmip && prev != kNoNode) reactive_bu(m, prev);
  }

  // ---- traffic -----------------------------------------------------------

  std::uint64_t emit(std::size_t ti) {
    const CbrSourceSpec& spec = cfg.traffic.at(ti);
    Stream& st = streams.at(ti);
    const NodeId src = spec.source;
    const bool mobile_src = mobiles.count(src) > 0;
    Packet p;
    p.kind = PacketKind::Data;
    p.uid = ++next_uid;
    p.seq = ++st.seq;
    p.sent_at = eng.now();
    p.payload_bytes = spec.packet_bytes;
    p.logical_src = mobile_src ? mobiles.at(src).home : addr(src);
    p.net_dst = spec.group;
    ledger.count_emitted(st.ledger_index);
    for (NodeId r : receivers[spec.group]) {
      if (r == src) continue;
      ledger.expect(p.uid, r, st.ledger_index, p.seq, p.sent_at);
      p.targets.push_back(r);
    }
    eng.note(src, "emit", "uid=" + std::to_string(p.uid) + " seq=" + std::to_string(p.seq));
    if (p.targets.empty()) return p.uid;
    const std::uint64_t uid = p.uid;
    if (!mobile_src) {
      p.net_src = addr(src);
      inject(std::move(p), src);
      return uid;
    }
    Mobile& m = mobiles.at(src);
    if (!m.attached || !m.phase.can_communicate()) {
      lose(p, LossReason::HandoffInProgress);
      return uid;
    }
    if (cfg.protocol == Protocol::MHmip && !m.flat) {
      p.net_src = m.send_source;
      if (cfg.mhmip.home_address_option) p.dst_option = HomeAddressOption{m.home};
      p = encapsulate(std::move(p), TunnelHeader{m.coa, addr(m.send_anchor)});
    } else {
      p.net_src = m.home;
      if (hierarchical() && !m.flat) {
        p = encapsulate(std::move(p), TunnelHeader{*m.rcoa, addr(m.ha)});
        p = encapsulate(std::move(p), TunnelHeader{m.coa, addr(m.map)});
      } else {
        p = encapsulate(std::move(p), TunnelHeader{m.coa, addr(m.ha)});
      }
    }
    send_unicast(std::move(p), src);
    return uid;
  }

  void schedule_emission(std::size_t ti) {
    Stream& st = streams[ti];
    if (st.next >= st.times.size()) return;
    const SimTime at = st.times[st.next++];
    if (at > cfg.duration) return;
    eng.schedule(at, cfg.traffic[ti].source, "cbr", [this, ti] {
      emit(ti);
      schedule_emission(ti);
    });
  }

  // ---- setup -------------------------------------------------------------

  void setup() {
    for (NodeId n : topo.nodes_with_role(Role::HomeAgent)) proxies[n] = Proxy{n, false, mip6::BindingCache(n), {}, {}, {}, 1};
    for (NodeId n : topo.nodes_with_role(Role::Map)) proxies[n] = Proxy{n, true, mip6::BindingCache(n), {}, {}, {}, 1};
    for (NodeId cn : cfg.correspondents) cn_caches.emplace(cn, mip6::BindingCache(cn));

    for (NodeId id : topo.nodes_with_role(Role::Mobile)) {
      Mobile m;
      m.id = id;
      auto ha = topo.home_agent(id);
      auto sub = topo.initial_subnet(id);
      if (!ha || !sub) throw Error(Errc::ValidationError, topo.name(id) + " lacks a home agent or initial subnet");
      m.ha = *ha;
      m.home = Address{topo.node_subnet(m.ha), table.allocate_host(topo.node_subnet(m.ha)), AddrKind::Home};
      table.bind(m.home, id);
      m.subnet = *sub;
      m.coa = Address{*sub, table.allocate_host(*sub), hierarchical() ? AddrKind::OnLinkCareOf : AddrKind::CareOf};
      table.bind(m.coa, id);
      table.attach(id, topo.subnet_node(*sub));
      mobiles[id] = std::move(m);
    }
    for (const Listener& l : cfg.listeners) {
      if (std::find(receivers[l.group].begin(), receivers[l.group].end(), l.node) == receivers[l.group].end()) {
        receivers[l.group].push_back(l.node);
      }
      if (auto it = mobiles.find(l.node); it != mobiles.end()) {
        it->second.listen.insert(l.group);
      } else {
        fixed_listeners.insert(l.node);
      }
    }
    for (const CbrSourceSpec& spec : cfg.traffic) {
      if (auto it = mobiles.find(spec.source); it != mobiles.end()) it->second.send.insert(spec.group);
    }

    const SimTime life = cfg.timers.binding_lifetime;
    for (auto& [id, m] : mobiles) {
      Proxy& ha = proxies.at(m.ha);
      if (hierarchical()) {
        auto map = topo.domain_map(m.subnet);
        if (map) {
          m.map = *map;
          const SubnetId rs = topo.node_subnet(*map);
          m.rcoa = Address{rs, table.allocate_host(rs), AddrKind::RegionalCareOf};
          table.bind(*m.rcoa, id);
          Proxy& mp = proxies.at(*map);
          mp.cache.update(*m.rcoa, m.coa, life);
          mp.assoc[id] = Association{*m.rcoa, std::nullopt, SimTime::max(), mp.next_generation++};
        } else {
          m.flat = true;
        }
      }
      ha.cache.update(m.home, mn_binding_coa(m), life);
      if (cfg.protocol == Protocol::MHmip && !m.flat) {
        m.send_anchor = m.map;
        m.send_source = *m.rcoa;
        proxy_listen(proxies.at(m.map), m);
      } else {
        m.send_anchor = m.ha;
        m.send_source = m.home;
        proxy_listen(ha, m);
      }
      for (const Address& g : m.send) source_add(g, m.send_source);
      for (NodeId cn : cfg.correspondents) {
        if (cfg.route_optimization) cn_caches.at(cn).update(m.home, mn_binding_coa(m), life);
      }
      schedule_refresh(m);
    }
    for (std::size_t i = 0; i < cfg.traffic.size(); ++i) {
      const CbrSourceSpec& spec = cfg.traffic[i];
      if (!mobiles.count(spec.source)) source_add(spec.group, addr(spec.source));
    }
    for (NodeId n : fixed_listeners) {
      for (const Listener& l : cfg.listeners) {
        if (l.node == n) anchor_join(n, l.group);
      }
    }

    for (std::size_t i = 0; i < cfg.traffic.size(); ++i) {
      const CbrSourceSpec& spec = cfg.traffic[i];
      Stream st;
      st.times = cbr_schedule(spec);
      const Address src = mobiles.count(spec.source) ? mobiles.at(spec.source).home : addr(spec.source);
      st.ledger_index = ledger.add_stream(StreamKey{src, spec.group}, spec.source, spec.interval());
      streams.push_back(std::move(st));
    }
    for (std::size_t i = 0; i < cfg.traffic.size(); ++i) schedule_emission(i);

    for (const MovementTrace& tr : cfg.movement) {
      const NodeId id = tr.mn;
      for (const MovementStep& step : tr.steps) {
        if (step.at > cfg.duration) break;
        const SubnetId sub = step.subnet;
        eng.schedule(step.at, id, "move", [this, id, sub] { move(id, sub); },
                     topo.name(id) + " to " + topo.subnet_name(sub));
      }
    }
  }

  void send_binding_update(NodeId mn, NodeId peer) {
    Mobile& m = mobile(mn);
    const bool is_cn = cn_caches.count(peer) > 0;
    if (peer != m.ha && !is_cn) {
      throw Error(Errc::BindingRefused, topo.name(peer) + " holds no binding role for " + topo.name(mn));
    }
    Signal sg;
    sg.mn = mn;
    sg.home = m.home;
    sg.care_of = mn_binding_coa(m);
    sg.epoch = m.epoch;
    send_signal(PacketKind::BindingUpdate, mn, m.coa, addr(peer), sg);
    count_bu(m, false, true);
  }

  RunResult collect() const {
    RunResult r;
    r.protocol = cfg.protocol;
    r.summary = RunSummary{eng.executed(), eng.now(), eng.pending()};
    r.handovers = records;
    for (auto& h : r.handovers) {
      h.packets_lost = 0;
      h.packets_duplicated = 0;
    }
    auto record_at = [&](NodeId n, SimTime t) -> HandoverRecord* {
      auto it = mobiles.find(n);
      if (it == mobiles.end()) return nullptr;
      HandoverRecord* best = nullptr;
      for (std::size_t idx : it->second.records) {
        if (r.handovers[idx].l2_start <= t) best = &r.handovers[idx];
      }
      return best;
    };
    for (const PacketOutcome& o : ledger.entries()) {
      if (o.outcome() == Outcome::Lost) {
        HandoverRecord* h = record_at(o.receiver, o.reason_at);
        if (!h) h = record_at(ledger.streams()[o.stream].source_node, o.sent_at);
        if (h) ++h->packets_lost;
      }
      if (o.duplicates > 0) {
        HandoverRecord* h = record_at(o.receiver, o.delivered_at);
        if (!h) h = record_at(ledger.streams()[o.stream].source_node, o.sent_at);
        if (h) h->packets_duplicated += o.duplicates;
      }
    }
    r.audit = ledger.audit();
    r.report = handover_report(r.handovers);
    r.signaling = sig;
    r.app_deliveries = app_deliveries;
    r.app_duplicates_filtered = dup_filtered;
    r.app_duplicates_passed = dup_passed;
    if (dup_passed > 0) {
      r.audit.ok = false;
      r.audit.problems.push_back(std::to_string(dup_passed) + " duplicates reached the application");
    }
    return r;
  }
};

Simulation::Simulation(Topology topo, SimConfig cfg, TraceSink* trace)
    : engine_(cfg.seed),
      topo_(std::move(topo)),
      net_(engine_, topo_, table_),
      mcast_(net_, cfg.mcast),
      cfg_(std::move(cfg)),
      impl_(std::make_unique<Impl>(*this)) {
  topo_.validate();
  if (trace) engine_.set_trace(trace, [this](NodeId n) { return n == kNoNode ? std::string("-") : topo_.name(n); });
  net_.set_observer(impl_.get());
  net_.set_default_drop([this](const Packet& p, NodeId, LossReason why) { impl_->lose(p, why); });
}

Simulation::~Simulation() = default;

void Simulation::setup() {
  if (setup_done_) return;
  setup_done_ = true;
  impl_->setup();
}

RunSummary Simulation::run_until(SimTime until) {
  setup();
  return engine_.run(until);
}

RunResult Simulation::run() {
  run_until(cfg_.duration);
  return collect();
}

RunResult Simulation::collect() const { return impl_->collect(); }

void Simulation::move(NodeId mn, SubnetId subnet) {
  setup();
  impl_->move(mn, subnet);
}

Address Simulation::configure_coa(NodeId mn, SubnetId subnet) {
  setup();
  return impl_->configure_coa(mn, subnet);
}

void Simulation::send_binding_update(NodeId mn, NodeId peer) {
  setup();
  impl_->send_binding_update(mn, peer);
}

std::uint64_t Simulation::emit(std::size_t traffic_index) {
  setup();
  return impl_->emit(traffic_index);
}

Address Simulation::home_address(NodeId mn) const { return impl_->mobile(mn).home; }
Address Simulation::care_of(NodeId mn) const { return impl_->mobile(mn).coa; }
std::optional<Address> Simulation::regional(NodeId mn) const { return impl_->mobile(mn).rcoa; }
NodeId Simulation::current_map(NodeId mn) const { return impl_->mobile(mn).map; }
mip6::Phase Simulation::phase(NodeId mn) const { return impl_->mobile(mn).phase.state; }
Address Simulation::send_source(NodeId mn) const { return impl_->mobile(mn).send_source; }

const mip6::BindingCache* Simulation::cache(NodeId holder) const {
  if (auto it = impl_->proxies.find(holder); it != impl_->proxies.end()) return &it->second.cache;
  if (auto it = impl_->cn_caches.find(holder); it != impl_->cn_caches.end()) return &it->second;
  return nullptr;
}

std::set<NodeId> Simulation::proxied(NodeId proxy, const Address& group) const {
  auto it = impl_->proxies.find(proxy);
  if (it == impl_->proxies.end()) return {};
  auto g = it->second.listeners.find(group);
  return g == it->second.listeners.end() ? std::set<NodeId>{} : g->second;
}

}  // namespace mmlab
