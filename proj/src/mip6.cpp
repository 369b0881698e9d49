#include "mmlab/mip6.hpp"

#include <sstream>
#include <stdexcept>

namespace mmlab::mip6 {

BindingCache::Update BindingCache::update(const Address& home, const Address& care_of, SimTime expires) {
  auto it = entries_.find(home);
  if (it == entries_.end()) {
    entries_.emplace(home, BindingCacheEntry{home, care_of, expires, holder_});
    return Update::Created;
  }
  const bool moved = !(it->second.care_of == care_of);
  it->second.care_of = care_of;
  it->second.lifetime_expires = expires;
  return moved ? Update::Moved : Update::Refreshed;
}

const BindingCacheEntry* BindingCache::lookup(const Address& home, SimTime now) const {
  auto it = entries_.find(home);
  if (it == entries_.end() || it->second.lifetime_expires <= now) return nullptr;
  return &it->second;
}

const BindingCacheEntry* BindingCache::find(const Address& home) const {
  auto it = entries_.find(home);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string BindingCache::digest() const {
  std::ostringstream os;
  for (const auto& [home, e] : entries_) {
    os << home.subnet << ":" << home.host << "->" << e.care_of.subnet << ":" << e.care_of.host << "@"
       << e.lifetime_expires.count() << ";";
  }
  return os.str();
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Connected: return "connected";
    case Phase::L2Handoff: return "l2_handoff";
    case Phase::AddrConfig: return "addr_config";
    case Phase::BindingUpdatePending: return "binding_update_pending";
    case Phase::Complete: return "complete";
  }
  return "?";
}

void HandoffPhase::advance(Phase next, SimTime now) {
  const bool ok = next == Phase::L2Handoff ||
                  (state == Phase::L2Handoff && next == Phase::AddrConfig) ||
                  (state == Phase::AddrConfig && next == Phase::BindingUpdatePending) ||
                  (state == Phase::BindingUpdatePending && next == Phase::Complete);
  if (!ok) {
    throw std::logic_error("illegal handoff transition " + std::string(phase_name(state)) + " -> " +
                           std::string(phase_name(next)));
  }
  state = next;
  entered_at = now;
}

}  // namespace mmlab::mip6
