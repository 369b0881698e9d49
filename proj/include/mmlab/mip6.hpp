#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmlab/address.hpp"
#include "mmlab/simkernel.hpp"

namespace mmlab::mip6 {

struct Timers {
  SimTime l2_handoff = SimTime::ms(50);
  SimTime ra_wait = SimTime::ms(10);
  SimTime addr_formation = SimTime::ms(20);
  SimTime bu_processing = SimTime::ms(1);
  SimTime binding_lifetime = SimTime::sec(420);

  SimTime addr_config() const { return ra_wait + addr_formation; }
};

struct BindingCacheEntry {
  Address home;
  Address care_of;
  SimTime lifetime_expires;
  NodeId holder = kNoNode;
};

/// Home-address -> care-of-address bindings held by one node (HA, CN or MAP).
class BindingCache {
 public:
  explicit BindingCache(NodeId holder = kNoNode) : holder_(holder) {}

  enum class Update { Created, Moved, Refreshed };

  Update update(const Address& home, const Address& care_of, SimTime expires);
  /// Live entry for home, or nullptr if absent or expired at `now`.
  const BindingCacheEntry* lookup(const Address& home, SimTime now) const;
  /// Entry regardless of expiry.
  const BindingCacheEntry* find(const Address& home) const;
  bool erase(const Address& home) { return entries_.erase(home) > 0; }
  std::size_t size() const { return entries_.size(); }
  NodeId holder() const { return holder_; }
  /// Stable textual form of the whole cache, for state comparisons.
  std::string digest() const;

 private:
  NodeId holder_;
  std::map<Address, BindingCacheEntry> entries_;
};

enum class Phase { Connected, L2Handoff, AddrConfig, BindingUpdatePending, Complete };

std::string_view phase_name(Phase p);

struct HandoffPhase {
  Phase state = Phase::Connected;
  SimTime entered_at;

  bool can_communicate() const { return state == Phase::Connected || state == Phase::Complete; }
  /// Moves to `next`, enforcing connected -> l2 -> addr -> bu -> complete,
  /// with a fresh l2 handoff allowed from any state.
  void advance(Phase next, SimTime now);
};

}  // namespace mmlab::mip6
