#include "mmlab/mcast.hpp"

#include <algorithm>
#include <sstream>

#include "mmlab/error.hpp"

namespace mmlab::mcast {

std::set<BranchEdge> MulticastTree::branches() const {
  std::set<BranchEdge> out;
  for (const auto& [router, up] : parent) out.insert({router, up});
  return out;
}

std::vector<NodeId> MulticastTree::upstream_path(NodeId member) const {
  std::vector<NodeId> out{member};
  NodeId cur = member;
  while (cur != root) {
    auto it = parent.find(cur);
    if (it == parent.end()) break;
    cur = it->second;
    out.push_back(cur);
    if (out.size() > parent.size() + 2) break;  // malformed; callers check validity
  }
  return out;
}

MulticastRouting::MulticastRouting(Network& net, Config cfg) : net_(net), cfg_(cfg) {
  const Topology& topo = net_.topology();
  for (NodeId n = 0; n < topo.size(); ++n) {
    horizon_ += topo.processing_delay;
    for (const Neighbor& nb : topo.neighbors(n)) horizon_ += nb.delay;
  }
}

SimTime MulticastRouting::join(const Address& group, NodeId member, const Address& source) {
  const Key key{group, source};
  auto it = trees_.find(key);
  if (it == trees_.end()) {
    MulticastTree t;
    t.group = group;
    t.source_addr = source;
    t.root = root_of(source);
    it = trees_.emplace(key, std::move(t)).first;
  }
  MulticastTree& tree = it->second;
  if (tree.members.count(member)) return tree.branch_established_at.at(member);

  const SimTime now = net_.engine().now();
  const Path path = net_.routing().route(member, tree.root, true);
  std::size_t junction = 0;
  while (junction < path.nodes.size() && !tree.on_tree(path.nodes[junction])) ++junction;
  const NodeId meet = path.nodes[junction];
  SimTime established = now + cfg_.graft_per_hop * static_cast<std::int64_t>(junction);
  if (auto r = tree.ready_at.find(meet); r != tree.ready_at.end()) established = std::max(established, r->second);
  for (std::size_t i = 0; i < junction; ++i) {
    tree.parent[path.nodes[i]] = path.nodes[i + 1];
    tree.ready_at[path.nodes[i]] = established;
  }
  tree.members.insert(member);
  tree.branch_established_at[member] = established;
  tree.junction[member] = meet;
  net_.engine().note(member, "graft",
                     "group=" + std::to_string(group.host) + " hops=" + std::to_string(junction) +
                         " ready_us=" + std::to_string(established.count()));
  catch_up(key, member, meet, established);
  return established;
}

void MulticastRouting::leave(const Address& group, NodeId member, const Address& source) {
  auto it = trees_.find({group, source});
  if (it == trees_.end() || !it->second.members.count(member)) {
    throw Error(Errc::NotAMember, "node " + std::to_string(member) + " not in group");
  }
  MulticastTree& tree = it->second;
  tree.members.erase(member);
  tree.branch_established_at.erase(member);
  tree.junction.erase(member);
  NodeId node = member;
  while (node != tree.root && !tree.members.count(node)) {
    const bool has_child = std::any_of(tree.parent.begin(), tree.parent.end(),
                                       [&](const auto& kv) { return kv.second == node; });
    if (has_child) break;
    auto p = tree.parent.find(node);
    if (p == tree.parent.end()) break;
    const NodeId up = p->second;
    tree.parent.erase(p);
    tree.ready_at.erase(node);
    node = up;
  }
  net_.engine().note(member, "prune", "group=" + std::to_string(group.host));
}

void MulticastRouting::remove_tree(const Address& group, const Address& source) {
  trees_.erase({group, source});
  recent_.erase({group, source});
}

bool MulticastRouting::is_member(const Address& group, NodeId member, const Address& source) const {
  auto t = tree(group, source);
  return t && t->members.count(member) > 0;
}

const MulticastTree* MulticastRouting::tree(const Address& group, const Address& source) const {
  auto it = trees_.find({group, source});
  return it == trees_.end() ? nullptr : &it->second;
}

std::vector<Address> MulticastRouting::trees_for(const Address& group) const {
  std::vector<Address> out;
  for (const auto& [key, t] : trees_) {
    if (key.first == group) out.push_back(key.second);
  }
  return out;
}

SimTime MulticastRouting::transit_to(const MulticastTree& t, NodeId node) const {
  const Topology& topo = net_.topology();
  const std::vector<NodeId> up = t.upstream_path(node);
  SimTime total;
  for (std::size_t i = up.size(); i-- > 1;) {
    if (auto l = topo.link(up[i], up[i - 1])) total += l->delay_ab + topo.processing_delay;
  }
  return total;
}

void MulticastRouting::send_copy(const Key& key, Packet p, NodeId member, NodeId from, SimTime junction_at,
                                 const Arrival& on_arrival, const Drop& on_drop) {
  const MulticastTree& t = trees_.at(key);
  const Topology& topo = net_.topology();
  const std::vector<NodeId> up = t.upstream_path(member);
  Path down;
  auto start = std::find(up.begin(), up.end(), from);
  down.nodes.assign(std::make_reverse_iterator(start == up.end() ? up.end() : start + 1), up.rend());
  for (std::size_t i = 1; i < down.nodes.size(); ++i) {
    if (auto l = topo.link(down.nodes[i - 1], down.nodes[i])) down.link_delay += l->delay_ab;
  }
  net_.forward(
      std::move(p), down,
      [this, key, member, junction_at, on_arrival, on_drop](Packet&& arrived, NodeId at) {
        auto it = trees_.find(key);
        if (it == trees_.end() || !it->second.members.count(member)) {
          net_.engine().note(at, "drop", "Pruned uid=" + std::to_string(arrived.uid));
          if (on_drop) on_drop(arrived, at, LossReason::Pruned);
          return;
        }
        if (it->second.branch_established_at.at(member) > junction_at) {
          net_.engine().note(at, "drop", "BranchPending uid=" + std::to_string(arrived.uid));
          if (on_drop) on_drop(arrived, at, LossReason::BranchPending);
          return;
        }
        on_arrival(std::move(arrived), member);
      },
      on_drop);
}

void MulticastRouting::catch_up(const Key& key, NodeId member, NodeId meet, SimTime established) {
  auto rit = recent_.find(key);
  if (rit == recent_.end()) return;
  const MulticastTree& t = trees_.at(key);
  const SimTime to_meet = transit_to(t, meet);
  const std::vector<NodeId> upstream = t.upstream_path(meet);
  for (std::size_t i = 0; i < rit->second.size(); ++i) {
    Injection& inj = rit->second[i];
    const SimTime passes = inj.at + to_meet;
    if (passes < established || passes < net_.engine().now() || !inj.served.insert(member).second) continue;
    net_.engine().schedule(
        passes, meet, "mcast_copy",
        [this, key, member, meet, passes, uid = inj.packet.uid, injected = inj.at, upstream] {
          auto tit = trees_.find(key);
          auto rit2 = recent_.find(key);
          if (tit == trees_.end() || !tit->second.members.count(member) || rit2 == recent_.end()) return;
          for (const Injection& e : rit2->second) {
            if (e.packet.uid != uid || e.at != injected) continue;
            Packet copy = e.packet;
            for (auto it = upstream.rbegin(); it + 1 != upstream.rend(); ++it) copy.via.push_back(*it);
            if (e.targets) copy.targets = e.targets(member, copy);
            send_copy(key, std::move(copy), member, meet, passes, e.on_arrival, e.on_drop);
            return;
          }
        },
        "uid=" + std::to_string(inj.packet.uid) + " member=" + std::to_string(member));
  }
}

std::size_t MulticastRouting::deliver(const Packet& p, const Arrival& on_arrival, const Drop& on_drop,
                                      const TargetsFor& targets) {
  const Key key{p.net_dst, p.net_src};
  const MulticastTree* t = tree(p.net_dst, p.net_src);
  if (!t) {
    if (on_drop) on_drop(p, root_of(p.net_src), LossReason::NoTree);
    return 0;
  }
  const SimTime now = net_.engine().now();
  auto& recent = recent_[key];
  while (!recent.empty() && recent.front().at + horizon_ < now) recent.pop_front();
  recent.push_back({p, now, on_arrival, on_drop, targets, t->members});

  std::size_t sent = 0;
  for (NodeId member : t->members) {
    auto j = t->junction.find(member);
    const SimTime junction_at = now + transit_to(*t, j == t->junction.end() ? t->root : j->second);
    Packet copy = p;
    if (targets) copy.targets = targets(member, p);
    send_copy(key, std::move(copy), member, t->root, junction_at, on_arrival, on_drop);
    ++sent;
  }
  return sent;
}

std::string MulticastRouting::digest() const {
  std::ostringstream os;
  for (const auto& [key, t] : trees_) {
    os << "G" << key.first.host << "@" << key.second.subnet << ":" << key.second.host << " root=" << t.root << " [";
    for (const auto& [n, up] : t.parent) os << n << ">" << up << "@" << t.ready_at.at(n).count() << " ";
    os << "] m={";
    for (NodeId m : t.members) os << m << ",";
    os << "}\n";
  }
  return os.str();
}

}  // namespace mmlab::mcast
