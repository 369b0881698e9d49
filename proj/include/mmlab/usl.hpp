#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace mmlab::usl {

/// Milliseconds on the locator's clock.
using Millis = std::int64_t;
using Clock = std::function<Millis()>;

inline constexpr Millis kDefaultTtl = 120000;
inline constexpr Millis kRefreshEvery = 60000;

struct SessionRecord {
  std::string email;
  std::string endpoint;  // host:port
  std::string session_id;
  nlohmann::json session_meta = nlohmann::json::object();
  Millis registered_at = 0;
  Millis expires_at = 0;

  bool operator==(const SessionRecord&) const = default;
};

nlohmann::json to_json(const SessionRecord& r);
SessionRecord record_from_json(const std::string& email, const nlohmann::json& j);

/// Exactly one '@' with non-empty local and domain parts, no whitespace.
bool valid_email(std::string_view email);
std::string email_domain(std::string_view email);

struct MxRecord {
  int preference = 0;
  std::string host;
};

/// Lowest preference wins; ties go to the lexicographically smallest host.
/// Throws NoMxRecord on an empty set.
const MxRecord& select_mx(const std::vector<MxRecord>& records, const std::string& domain);

/// "usl." followed by the selected exchanger's mail domain (its host name
/// minus the first label; single-label hosts are used whole).
std::string directory_host(const MxRecord& mx);

class ResolverAdapter {
 public:
  virtual ~ResolverAdapter() = default;
  /// Empty when the domain has no mail service.
  virtual std::vector<MxRecord> mx(const std::string& domain) const = 0;
  virtual bool resolves(const std::string& host) const = 0;
};

/// Email-keyed session store of one directory server. Safe for concurrent use;
/// last writer wins per key and sweeps are atomic with respect to lookups.
class SessionRegistry {
 public:
  SessionRecord put(SessionRecord r);
  SessionRecord refresh(const std::string& email, const std::string& session_id, Millis now, Millis ttl);
  /// Live record or NotRegistered / Expired.
  SessionRecord get(const std::string& email, Millis now) const;
  bool remove(const std::string& email);
  std::size_t expire_sweep(Millis now);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, SessionRecord> records_;
};

class DirectoryAdapter {
 public:
  virtual ~DirectoryAdapter() = default;
  /// Throws DirectoryUnreachable for an unknown host.
  virtual SessionRegistry& directory(const std::string& host) = 0;
  virtual std::vector<std::string> hosts() const = 0;
};

class StubResolver final : public ResolverAdapter {
 public:
  void add_mx(const std::string& domain, int pref, const std::string& host) { mx_[domain].push_back({pref, host}); }
  void add_host(const std::string& host) { hosts_.push_back(host); }
  std::vector<MxRecord> mx(const std::string& domain) const override;
  bool resolves(const std::string& host) const override;

 private:
  std::map<std::string, std::vector<MxRecord>> mx_;
  std::vector<std::string> hosts_;
};

class StubDirectory final : public DirectoryAdapter {
 public:
  SessionRegistry& add(const std::string& host);
  SessionRegistry& directory(const std::string& host) override;
  std::vector<std::string> hosts() const override;

 private:
  std::map<std::string, std::unique_ptr<SessionRegistry>> dirs_;
};

/// Client side of the locator: finds the directory for an email address by
/// MX lookup plus the naming convention, then talks to that directory.
class Locator {
 public:
  Locator(std::shared_ptr<ResolverAdapter> resolver, std::shared_ptr<DirectoryAdapter> directory, Clock clock);

  /// Throws InvalidEmail, ValidationError (ttl <= 0) or resolution errors.
  SessionRecord register_session(const std::string& email, const std::string& endpoint, const std::string& session_id,
                                 nlohmann::json meta = nlohmann::json::object(), Millis ttl = kDefaultTtl);
  SessionRecord refresh(const std::string& email, const std::string& session_id, Millis ttl = kDefaultTtl);
  SessionRecord lookup(const std::string& email) const;
  bool unregister(const std::string& email);
  std::size_t expire_sweep();
  /// Directory host the two-step resolution picks for an email address.
  std::string resolve_directory(const std::string& email) const;
  Millis now() const { return clock_(); }

 private:
  SessionRegistry& registry_for(const std::string& email) const;

  std::shared_ptr<ResolverAdapter> resolver_;
  std::shared_ptr<DirectoryAdapter> directory_;
  Clock clock_;
};

struct Fixture {
  std::shared_ptr<StubResolver> resolver;
  std::shared_ptr<StubDirectory> directory;
};

/// {mx: {domain: [[pref, host], ...]}, directories: {host: {email: record}}}.
/// Directory hosts resolve; records take registered_at/expires_at in ms,
/// defaulting to 0 and the default ttl. Throws ParseError / ValidationError.
Fixture load_fixture(const nlohmann::json& doc);
Fixture load_fixture_file(const std::string& path);

/// Handles one request object of the line protocol; never throws.
/// Verbs: register, refresh, lookup, unregister, sweep.
nlohmann::json handle_request(Locator& loc, const nlohmann::json& req);

/// Line-delimited JSON request/response service over TCP.
class Server {
 public:
  explicit Server(Locator& loc) : loc_(loc) {}
  ~Server();
  /// Binds 127.0.0.1 (or `bind_addr`) on `port` (0 picks a free one) and
  /// starts accepting in a background thread. Returns the bound port.
  int start(int port, const std::string& bind_addr = "127.0.0.1");
  void stop();
  int port() const { return port_; }
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  void accept_loop();
  void serve(int fd);

  Locator& loc_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
  std::mutex workers_mu_;
};

/// Sends one request line and reads one response line.
nlohmann::json client_request(const std::string& host, int port, const nlohmann::json& req);

}  // namespace mmlab::usl
