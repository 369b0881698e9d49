#include "mmlab/usl.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include "mmlab/error.hpp"

namespace mmlab::usl {

nlohmann::json to_json(const SessionRecord& r) {
  return {{"email", r.email},
          {"endpoint", r.endpoint},
          {"session_id", r.session_id},
          {"session_meta", r.session_meta},
          {"registered_at", r.registered_at},
          {"expires_at", r.expires_at}};
}

SessionRecord record_from_json(const std::string& email, const nlohmann::json& j) {
  SessionRecord r;
  r.email = email;
  r.endpoint = j.value("endpoint", "");
  r.session_id = j.value("session_id", "");
  r.session_meta = j.value("session_meta", nlohmann::json::object());
  r.registered_at = j.value("registered_at", Millis{0});
  r.expires_at = j.value("expires_at", r.registered_at + kDefaultTtl);
  return r;
}

bool valid_email(std::string_view email) {
  const auto at = email.find('@');
  if (at == std::string_view::npos || email.find('@', at + 1) != std::string_view::npos) return false;
  if (at == 0 || at + 1 == email.size()) return false;
  return std::none_of(email.begin(), email.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n'; });
}

std::string email_domain(std::string_view email) {
  if (!valid_email(email)) throw Error(Errc::InvalidEmail, "invalid email address '" + std::string(email) + "'");
  std::string d(email.substr(email.find('@') + 1));
  std::transform(d.begin(), d.end(), d.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return d;
}

const MxRecord& select_mx(const std::vector<MxRecord>& records, const std::string& domain) {
  if (records.empty()) throw Error(Errc::NoMxRecord, "no MX record for " + domain);
  return *std::min_element(records.begin(), records.end(), [](const MxRecord& a, const MxRecord& b) {
    return a.preference != b.preference ? a.preference < b.preference : a.host < b.host;
  });
}

std::string directory_host(const MxRecord& mx) {
  const auto dot = mx.host.find('.');
  return "usl." + (dot == std::string::npos ? mx.host : mx.host.substr(dot + 1));
}

std::vector<MxRecord> StubResolver::mx(const std::string& domain) const {
  auto it = mx_.find(domain);
  return it == mx_.end() ? std::vector<MxRecord>{} : it->second;
}

bool StubResolver::resolves(const std::string& host) const {
  return std::find(hosts_.begin(), hosts_.end(), host) != hosts_.end();
}

SessionRecord SessionRegistry::put(SessionRecord r) {
  std::unique_lock lock(mu_);
  records_[r.email] = r;
  return r;
}

SessionRecord SessionRegistry::refresh(const std::string& email, const std::string& session_id, Millis now,
                                       Millis ttl) {
  std::unique_lock lock(mu_);
  auto it = records_.find(email);
  if (it == records_.end()) throw Error(Errc::NotRegistered, email + " is not registered");
  if (it->second.expires_at <= now) throw Error(Errc::Expired, email + " expired");
  if (it->second.session_id != session_id) throw Error(Errc::SessionMismatch, "session id does not match");
  it->second.expires_at = now + ttl;
  return it->second;
}

SessionRecord SessionRegistry::get(const std::string& email, Millis now) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(email);
  // An expired record counts as gone even before the sweep removes it.
  if (it == records_.end() || it->second.expires_at <= now) {
    throw Error(Errc::NotRegistered, email + " has no live session");
  }
  return it->second;
}

bool SessionRegistry::remove(const std::string& email) {
  std::unique_lock lock(mu_);
  return records_.erase(email) > 0;
}

std::size_t SessionRegistry::expire_sweep(Millis now) {
  std::unique_lock lock(mu_);
  return std::erase_if(records_, [now](const auto& kv) { return kv.second.expires_at <= now; });
}

std::size_t SessionRegistry::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

SessionRegistry& StubDirectory::add(const std::string& host) {
  auto& slot = dirs_[host];
  if (!slot) slot = std::make_unique<SessionRegistry>();
  return *slot;
}

SessionRegistry& StubDirectory::directory(const std::string& host) {
  auto it = dirs_.find(host);
  if (it == dirs_.end()) throw Error(Errc::DirectoryUnreachable, "directory " + host + " unreachable");
  return *it->second;
}

std::vector<std::string> StubDirectory::hosts() const {
  std::vector<std::string> out;
  for (const auto& [h, d] : dirs_) out.push_back(h);
  return out;
}

Locator::Locator(std::shared_ptr<ResolverAdapter> resolver, std::shared_ptr<DirectoryAdapter> directory, Clock clock)
    : resolver_(std::move(resolver)), directory_(std::move(directory)), clock_(std::move(clock)) {}

std::string Locator::resolve_directory(const std::string& email) const {
  const std::string domain = email_domain(email);
  const auto records = resolver_->mx(domain);
  const std::string host = directory_host(select_mx(records, domain));
  if (!resolver_->resolves(host)) throw Error(Errc::DirectoryUnreachable, host + " does not resolve");
  return host;
}

SessionRegistry& Locator::registry_for(const std::string& email) const {
  return directory_->directory(resolve_directory(email));
}

SessionRecord Locator::register_session(const std::string& email, const std::string& endpoint,
                                        const std::string& session_id, nlohmann::json meta, Millis ttl) {
  if (!valid_email(email)) throw Error(Errc::InvalidEmail, "invalid email address '" + email + "'");
  if (ttl <= 0) throw Error(Errc::ValidationError, "ttl must be positive");
  SessionRecord r;
  r.email = email;
  r.endpoint = endpoint;
  r.session_id = session_id;
  r.session_meta = std::move(meta);
  r.registered_at = now();
  r.expires_at = r.registered_at + ttl;
  return registry_for(email).put(std::move(r));
}

SessionRecord Locator::refresh(const std::string& email, const std::string& session_id, Millis ttl) {
  if (ttl <= 0) throw Error(Errc::ValidationError, "ttl must be positive");
  return registry_for(email).refresh(email, session_id, now(), ttl);
}

SessionRecord Locator::lookup(const std::string& email) const { return registry_for(email).get(email, now()); }

bool Locator::unregister(const std::string& email) { return registry_for(email).remove(email); }

std::size_t Locator::expire_sweep() {
  std::size_t n = 0;
  for (const auto& h : directory_->hosts()) n += directory_->directory(h).expire_sweep(now());
  return n;
}

Fixture load_fixture(const nlohmann::json& doc) {
  Fixture f{std::make_shared<StubResolver>(), std::make_shared<StubDirectory>()};
  try {
    if (doc.contains("mx")) {
      for (const auto& [domain, list] : doc.at("mx").items()) {
        for (const auto& e : list) f.resolver->add_mx(domain, e.at(0).get<int>(), e.at(1).get<std::string>());
      }
    }
    if (doc.contains("directories")) {
      for (const auto& [host, entries] : doc.at("directories").items()) {
        SessionRegistry& reg = f.directory->add(host);
        f.resolver->add_host(host);
        for (const auto& [email, rec] : entries.items()) {
          if (!valid_email(email)) throw Error(Errc::InvalidEmail, "fixture email '" + email + "'");
          SessionRecord r = record_from_json(email, rec);
          if (r.expires_at <= r.registered_at) throw Error(Errc::ValidationError, "fixture record for " + email + " expires before registration");
          reg.put(std::move(r));
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ValidationError, std::string("fixture: ") + e.what());
  }
  return f;
}

Fixture load_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
  return load_fixture(doc);
}

nlohmann::json handle_request(Locator& loc, const nlohmann::json& req) {
  try {
    const std::string verb = req.at("verb").get<std::string>();
    const std::string email = req.value("email", "");
    const Millis ttl = req.contains("ttl_ms") ? req.at("ttl_ms").get<Millis>() : kDefaultTtl;
    if (verb == "register") {
      auto r = loc.register_session(email, req.value("endpoint", ""), req.value("session_id", ""),
                                    req.value("session_meta", nlohmann::json::object()), ttl);
      return {{"ok", true}, {"record", to_json(r)}};
    }
    if (verb == "refresh") return {{"ok", true}, {"record", to_json(loc.refresh(email, req.value("session_id", ""), ttl))}};
    if (verb == "lookup") return {{"ok", true}, {"record", to_json(loc.lookup(email))}};
    if (verb == "unregister") return {{"ok", loc.unregister(email)}};
    if (verb == "sweep") return {{"ok", true}, {"removed", loc.expire_sweep()}};
    return {{"ok", false}, {"error", "ValidationError"}, {"message", "unknown verb " + verb}};
  } catch (const Error& e) {
    return {{"ok", false}, {"error", std::string(errc_name(e.code()))}, {"message", e.what()}};
  } catch (const nlohmann::json::exception& e) {
    return {{"ok", false}, {"error", "ParseError"}, {"message", e.what()}};
  }
}

}  // namespace mmlab::usl
