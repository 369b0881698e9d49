#include <doctest.h>

#include <atomic>
#include <thread>

#include "mmlab/error.hpp"
#include "mmlab/usl.hpp"
#include "testnet.hpp"

using namespace mmlab;
using namespace mmlab::usl;
using testnet::code_of;

namespace {

struct Lab {
  Fixture fx;
  std::shared_ptr<std::atomic<Millis>> clock = std::make_shared<std::atomic<Millis>>(0);
  Locator loc;

  Lab() : Lab(load_fixture_file(std::string(MMLAB_SOURCE_DIR) + "/fixtures/usl.json")) {}
  explicit Lab(Fixture f)
      : fx(std::move(f)), loc(fx.resolver, fx.directory, [c = clock] { return c->load(); }) {}
  void at(Millis t) { clock->store(t); }
};

}  // namespace

TEST_CASE("the bundled fixture resolves alice through the preferred exchanger") {
  Lab lab;
  CHECK(lab.loc.resolve_directory("alice@example.org") == "usl.example.org");
  const SessionRecord r = lab.loc.lookup("alice@example.org");
  CHECK(r.endpoint == "198.51.100.7:5060");
  CHECK(r.session_id == "conf-1");
  CHECK(r.session_meta["codec"] == "g722");
  CHECK(r.expires_at == 120000);
}

TEST_CASE("register then lookup returns the identical record") {
  Lab lab;
  lab.at(5000);
  const auto put = lab.loc.register_session("bob@example.net", "203.0.113.4:5004", "s-9",
                                            {{"codec", "opus"}, {"rate_kbps", 24}}, 30000);
  CHECK(put.registered_at == 5000);
  CHECK(put.expires_at == 35000);
  CHECK(lab.loc.lookup("bob@example.net") == put);
  CHECK(lab.fx.directory->directory("usl.example.net").size() == 1);
  // re-registering replaces the single entry
  const auto again = lab.loc.register_session("bob@example.net", "203.0.113.5:5004", "s-10");
  CHECK(lab.loc.lookup("bob@example.net") == again);
  CHECK(lab.fx.directory->directory("usl.example.net").size() == 1);
}

TEST_CASE("roundtrip holds for many generated records") {
  Lab lab;
  RandomStream rs(17, "usl-roundtrip");
  for (int i = 0; i < 200; ++i) {
    lab.at(static_cast<Millis>(rs.pick(100000)));
    const std::string email = "u" + std::to_string(rs.pick(50)) + (rs.pick(2) ? "@example.org" : "@example.net");
    const auto put = lab.loc.register_session(email, "198.51.100." + std::to_string(i) + ":5060",
                                              "s" + std::to_string(i), {{"n", i}},
                                              1 + static_cast<Millis>(rs.pick(60000)));
    CHECK(lab.loc.lookup(email) == put);
  }
}

TEST_CASE("the lowest preference exchanger picks the directory") {
  std::vector<MxRecord> mx{{20, "b.mail.test"}, {10, "a.relay.test"}, {10, "z.relay.test"}, {30, "c.test"}};
  CHECK(select_mx(mx, "x").host == "a.relay.test");
  CHECK(directory_host(select_mx(mx, "x")) == "usl.relay.test");
  CHECK(directory_host({1, "localhost"}) == "usl.localhost");
  // exhaustive check of the priority rule against permutations
  std::sort(mx.begin(), mx.end(), [](auto& a, auto& b) { return a.host < b.host; });
  do {
    CHECK(select_mx(mx, "x").host == "a.relay.test");
  } while (std::next_permutation(mx.begin(), mx.end(), [](auto& a, auto& b) { return a.host < b.host; }));
  CHECK(code_of([] { select_mx({}, "nomail.test"); }) == Errc::NoMxRecord);
}

TEST_CASE("domains without mail service give NoMxRecord") {
  Lab lab;
  CHECK(code_of([&] { lab.loc.lookup("carol@nomail.example"); }) == Errc::NoMxRecord);
  CHECK(code_of([&] { lab.loc.register_session("carol@nomail.example", "h:1", "s"); }) == Errc::NoMxRecord);
}

TEST_CASE("unresolvable directories are reported") {
  Fixture f = load_fixture(nlohmann::json::parse(R"({"mx": {"lost.test": [[1, "mx.elsewhere.test"]]}})"));
  Lab lab(std::move(f));
  CHECK(code_of([&] { lab.loc.lookup("x@lost.test"); }) == Errc::DirectoryUnreachable);
}

TEST_CASE("malformed addresses are rejected") {
  Lab lab;
  for (const char* bad : {"nobody", "@example.org", "alice@", "a@b@example.org", "al ice@example.org"}) {
    CHECK_FALSE(valid_email(bad));
    CHECK(code_of([&] { lab.loc.register_session(bad, "h:1", "s"); }) == Errc::InvalidEmail);
  }
  CHECK(valid_email("alice@example.org"));
  CHECK(email_domain("Alice@Example.ORG") == "example.org");
  CHECK(code_of([&] { lab.loc.register_session("bob@example.net", "h:1", "s", {}, 0); }) == Errc::ValidationError);
}

TEST_CASE("sessions expire without refresh") {
  Lab lab;
  lab.loc.register_session("bob@example.net", "h:1", "s1", {}, 1000);
  lab.at(999);
  CHECK(lab.loc.lookup("bob@example.net").session_id == "s1");
  lab.at(1000);
  CHECK(code_of([&] { lab.loc.lookup("bob@example.net"); }) == Errc::NotRegistered);
  CHECK(code_of([&] { lab.loc.refresh("bob@example.net", "s1", 1000); }) == Errc::Expired);
  CHECK(lab.loc.expire_sweep() == 1);
  CHECK(code_of([&] { lab.loc.refresh("bob@example.net", "s1", 1000); }) == Errc::NotRegistered);
  // alice's fixture entry runs out at 120 s
  lab.at(120000);
  CHECK(code_of([&] { lab.loc.lookup("alice@example.org"); }) == Errc::NotRegistered);
}

TEST_CASE("refresh extends expiry from now and checks the session id") {
  Lab lab;
  lab.loc.register_session("bob@example.net", "h:1", "s1", {}, 1000);
  lab.at(600);
  CHECK(lab.loc.refresh("bob@example.net", "s1", 1000).expires_at == 1600);
  lab.at(1500);
  CHECK(lab.loc.lookup("bob@example.net").expires_at == 1600);
  CHECK(code_of([&] { lab.loc.refresh("bob@example.net", "other", 1000); }) == Errc::SessionMismatch);
  CHECK(code_of([&] { lab.loc.refresh("nobody@example.net", "s1", 1000); }) == Errc::NotRegistered);
}

TEST_CASE("sweeps remove exactly the expired records") {
  SessionRegistry reg;
  CHECK(reg.expire_sweep(0) == 0);
  for (int i = 0; i < 5; ++i) {
    SessionRecord r;
    r.email = "u" + std::to_string(i) + "@x.test";
    r.expires_at = i < 2 ? 100 : 1000;
    reg.put(r);
  }
  CHECK(reg.expire_sweep(99) == 0);
  CHECK(reg.expire_sweep(100) == 2);
  CHECK(reg.size() == 3);
  CHECK(code_of([&] { reg.get("u0@x.test", 0); }) == Errc::NotRegistered);
  CHECK(reg.get("u4@x.test", 999).expires_at == 1000);
}

TEST_CASE("concurrent writers, readers and sweeps keep every record whole") {
  SessionRegistry reg;
  std::atomic<bool> bad{false};
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 2000; ++i) {
        SessionRecord r;
        r.email = "u" + std::to_string(i % 16) + "@x.test";
        r.session_id = std::to_string(w) + ":" + std::to_string(i);
        r.endpoint = r.session_id;  // readers check the two fields agree
        r.registered_at = i;
        r.expires_at = i + (i % 3 == 0 ? 1 : 100000);
        reg.put(r);
      }
    });
  }
  for (int rd = 0; rd < 3; ++rd) {
    threads.emplace_back([&] {
      for (int i = 0; i < 4000; ++i) {
        try {
          auto r = reg.get("u" + std::to_string(i % 16) + "@x.test", 500);
          if (r.endpoint != r.session_id || r.expires_at <= 500) bad = true;
        } catch (const Error& e) {
          if (e.code() != Errc::NotRegistered) bad = true;
        }
      }
    });
  }
  threads.emplace_back([&] {
    for (int i = 0; i < 500; ++i) reg.expire_sweep(500);
  });
  for (auto& t : threads) t.join();
  CHECK_FALSE(bad.load());
  CHECK(reg.size() <= 16);
}

TEST_CASE("the line protocol answers every verb") {
  Lab lab;
  auto ok = [&](nlohmann::json req) { return handle_request(lab.loc, req); };
  auto r = ok({{"verb", "register"}, {"email", "bob@example.net"}, {"endpoint", "h:1"}, {"session_id", "s"},
               {"session_meta", {{"k", 1}}}, {"ttl_ms", 5000}});
  CHECK(r["ok"] == true);
  CHECK(r["record"]["expires_at"] == 5000);
  CHECK(ok({{"verb", "lookup"}, {"email", "bob@example.net"}})["record"] == r["record"]);
  CHECK(ok({{"verb", "refresh"}, {"email", "bob@example.net"}, {"session_id", "x"}})["error"] == "SessionMismatch");
  CHECK(ok({{"verb", "unregister"}, {"email", "bob@example.net"}})["ok"] == true);
  CHECK(ok({{"verb", "lookup"}, {"email", "bob@example.net"}})["error"] == "NotRegistered");
  CHECK(ok({{"verb", "dance"}})["ok"] == false);
  CHECK(ok({{"email", "x"}})["error"] == "ParseError");
  CHECK(ok({{"verb", "sweep"}})["removed"] == 0);
}

TEST_CASE("a served locator round-trips register and lookup over TCP") {
  Lab lab;
  Server server(lab.loc);
  const int port = server.start(0);
  REQUIRE(port > 0);
  const nlohmann::json reg = client_request("127.0.0.1", port,
                                            {{"verb", "register"},
                                             {"email", "dave@example.org"},
                                             {"endpoint", "192.0.2.1:5060"},
                                             {"session_id", "d1"},
                                             {"session_meta", {{"codec", "g711"}}}});
  REQUIRE(reg["ok"] == true);
  const nlohmann::json got = client_request("127.0.0.1", port, {{"verb", "lookup"}, {"email", "dave@example.org"}});
  CHECK(got["record"] == reg["record"]);
  std::vector<std::thread> clients;
  std::atomic<int> fine{0};
  for (int i = 0; i < 6; ++i) {
    clients.emplace_back([&] {
      auto r = client_request("127.0.0.1", port, {{"verb", "lookup"}, {"email", "alice@example.org"}});
      if (r["record"]["session_id"] == "conf-1") ++fine;
    });
  }
  for (auto& c : clients) c.join();
  CHECK(fine == 6);
  server.stop();
  CHECK(code_of([&] { client_request("127.0.0.1", port, {{"verb", "sweep"}}); }) == Errc::DirectoryUnreachable);
}
