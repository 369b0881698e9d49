#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmlab {

/// Simulated time in integer microseconds since simulation start.
class SimTime {
 public:
  constexpr SimTime() = default;

  static constexpr SimTime us(std::int64_t v) { return SimTime(v); }
  static constexpr SimTime ms(std::int64_t v) { return SimTime(v * 1000); }
  static constexpr SimTime sec(std::int64_t v) { return SimTime(v * 1000000); }
  static constexpr SimTime max() { return SimTime(INT64_MAX); }

  constexpr std::int64_t count() const { return us_; }
  constexpr double millis() const { return static_cast<double>(us_) / 1000.0; }
  constexpr double seconds() const { return static_cast<double>(us_) / 1e6; }

  constexpr SimTime operator+(SimTime o) const { return SimTime(us_ + o.us_); }
  constexpr SimTime operator-(SimTime o) const { return SimTime(us_ - o.us_); }
  constexpr SimTime operator*(std::int64_t k) const { return SimTime(us_ * k); }
  constexpr SimTime& operator+=(SimTime o) {
    us_ += o.us_;
    return *this;
  }
  constexpr auto operator<=>(const SimTime&) const = default;

 private:
  constexpr explicit SimTime(std::int64_t v) : us_(v) {}
  std::int64_t us_ = 0;
};

namespace literals {
constexpr SimTime operator""_us(unsigned long long v) { return SimTime::us(static_cast<std::int64_t>(v)); }
constexpr SimTime operator""_ms(unsigned long long v) { return SimTime::ms(static_cast<std::int64_t>(v)); }
constexpr SimTime operator""_s(unsigned long long v) { return SimTime::sec(static_cast<std::int64_t>(v)); }
}  // namespace literals

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

// Thresholds used throughout reporting.
inline constexpr SimTime kTolerableGap = SimTime::ms(100);
inline constexpr SimTime kInterruptGap = SimTime::ms(300);
inline constexpr SimTime kAudioBudget = SimTime::ms(120);
inline constexpr SimTime kHandoverTarget = SimTime::ms(75);

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void record(SimTime t, std::string_view node, std::string_view kind, std::string_view detail) = 0;
};

/// One JSON object per line: {"t_us","node","kind","detail"}.
class JsonlTrace final : public TraceSink {
 public:
  explicit JsonlTrace(std::ostream& out) : out_(out) {}
  void record(SimTime t, std::string_view node, std::string_view kind, std::string_view detail) override;

 private:
  std::ostream& out_;
};

/// Keeps trace lines in memory and a running 64-bit digest of them.
class MemoryTrace final : public TraceSink {
 public:
  explicit MemoryTrace(bool keep_lines = true) : keep_(keep_lines) {}
  void record(SimTime t, std::string_view node, std::string_view kind, std::string_view detail) override;

  const std::vector<std::string>& lines() const { return lines_; }
  std::uint64_t digest() const { return digest_; }
  std::uint64_t count() const { return count_; }

 private:
  bool keep_;
  std::vector<std::string> lines_;
  std::uint64_t digest_ = 1469598103934665603ull;
  std::uint64_t count_ = 0;
};

std::string format_trace_line(SimTime t, std::string_view node, std::string_view kind, std::string_view detail);

enum class DistributionKind { Uniform, Exponential, Constant };

struct DistributionSpec {
  DistributionKind kind = DistributionKind::Constant;
  double a = 0.0;  // uniform low, exponential mean, constant value
  double b = 0.0;  // uniform high

  static DistributionSpec uniform(double lo, double hi) { return {DistributionKind::Uniform, lo, hi}; }
  static DistributionSpec exponential(double mean) { return {DistributionKind::Exponential, mean, 0.0}; }
  static DistributionSpec constant(double v) { return {DistributionKind::Constant, v, 0.0}; }
  /// Throws Errc::UnknownDistribution for anything but uniform/exponential/constant.
  static DistributionSpec from_name(std::string_view name, double a, double b = 0.0);
};

/// Deterministic random stream keyed by (global seed, label). Uses mt19937_64,
/// whose output sequence is fixed by the standard, and maps raw draws to reals
/// by hand so results do not depend on the standard library's distributions.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string label);

  const std::string& label() const { return label_; }
  double draw(const DistributionSpec& dist);
  double uniform01();  // in [0, 1)
  std::size_t pick(std::size_t n);  // uniform in [0, n)

 private:
  std::string label_;
  std::mt19937_64 gen_;
};

struct EventHandle {
  std::uint64_t seq = 0;
  bool valid() const { return seq != 0; }
};

struct RunSummary {
  std::uint64_t events_executed = 0;
  SimTime clock;
  std::size_t events_pending = 0;
};

/// Single-threaded discrete-event engine. Events are ordered by (fire time,
/// insertion sequence); equal-time events run in insertion order.
class Engine {
 public:
  using Action = std::function<void()>;

  explicit Engine(std::uint64_t seed = 0) : seed_(seed) {}
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void set_trace(TraceSink* sink, std::function<std::string(NodeId)> node_name = {});

  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  EventHandle schedule(SimTime at, NodeId node, std::string kind, Action action, std::string detail = {});
  EventHandle schedule_in(SimTime delay, NodeId node, std::string kind, Action action, std::string detail = {}) {
    return schedule(now_ + delay, node, std::move(kind), std::move(action), std::move(detail));
  }
  bool cancel(EventHandle handle);

  RunSummary run(SimTime until);

  /// Writes an annotation record at the current time (no event is created).
  void note(NodeId node, std::string_view kind, std::string_view detail);

  RandomStream stream(const std::string& label) const { return RandomStream(seed_, label); }
  std::size_t pending() const { return pending_.size(); }
  std::uint64_t executed() const { return executed_; }

 private:
  struct Pending {
    NodeId node;
    std::string kind;
    std::string detail;
    Action action;
  };
  struct Key {
    SimTime at;
    std::uint64_t seq;
    bool operator>(const Key& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  std::string name_of(NodeId n) const;

  std::uint64_t seed_;
  SimTime now_;
  std::uint64_t next_seq_ = 1;
  std::uint64_t executed_ = 0;
  std::priority_queue<Key, std::vector<Key>, std::greater<Key>> queue_;
  std::unordered_map<std::uint64_t, Pending> pending_;
  TraceSink* trace_ = nullptr;
  std::function<std::string(NodeId)> node_name_;
};

}  // namespace mmlab
