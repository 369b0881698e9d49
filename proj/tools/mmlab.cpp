// mmlab: scenario runner, protocol comparison and USL demo.
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "mmlab/error.hpp"
#include "mmlab/scenario.hpp"
#include "mmlab/usl.hpp"

namespace {

mmlab::usl::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::optional<std::filesystem::path> out_dir(const std::string& flag) {
  if (!flag.empty()) return std::filesystem::path(flag);
  if (const char* env = std::getenv("SIM_OUT_DIR"); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

mmlab::Scenario load(const std::string& path, std::optional<std::uint64_t> seed) {
  mmlab::Scenario sc = mmlab::load_scenario(path);
  if (seed) sc.seed = *seed;
  return sc;
}

void print_run(const mmlab::RunArtifacts& a) {
  const auto& r = a.result;
  std::cout << "protocol " << mmlab::protocol_name(r.protocol) << ": moves " << r.report.total_moves << ", global "
            << r.report.global_handovers << ", delivered " << r.audit.delivered << ", lost " << r.audit.lost
            << ", in flight " << r.audit.in_flight << ", signaling global/local " << r.signaling.global << "/"
            << r.signaling.local << ", audit " << (r.audit.ok ? "ok" : "FAILED") << "\n";
  for (const auto& [kind, g] : r.report.gaps) {
    std::cout << "  " << mmlab::handover_kind_name(kind) << ": n=" << g.count << " p50=" << g.p50.millis()
              << "ms p90=" << g.p90.millis() << "ms max=" << g.max.millis() << "ms\n";
  }
  for (const auto& p : r.audit.problems) std::cerr << "audit: " << p << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile multicast handover lab"};
  app.require_subcommand(1);

  std::string scenario_path, out, protocol;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out, "Output directory (default $SIM_OUT_DIR)");
  run->add_option("--protocol", protocol, "Protocol variant, e.g. m_hmip or m_hmip:nobicast");

  std::vector<std::string> pair;
  auto* cmp = app.add_subcommand("compare", "Paired run of two protocol variants");
  cmp->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  cmp->add_option("--seed", seed, "Override the scenario seed");
  cmp->add_option("--out", out, "Output directory (default $SIM_OUT_DIR)");
  cmp->add_option("--protocol", pair, "Two protocol variants")->expected(2)->required();

  auto* val = app.add_subcommand("validate", "Parse and validate a scenario");
  val->add_option("--scenario", scenario_path, "Scenario JSON file")->required();

  std::string fixture = "fixtures/usl.json";
  std::string bind = "127.0.0.1";
  int port = 7411;
  auto* serve = app.add_subcommand("usl-serve", "Serve the session locator line protocol");
  serve->add_option("--fixture", fixture, "Fixture JSON with MX records and directories");
  serve->add_option("--port", port, "TCP port (0 picks one)");
  serve->add_option("--bind", bind, "Bind address");

  std::string email, connect;
  mmlab::usl::Millis at = 0;
  auto* lookup = app.add_subcommand("usl-lookup", "Look up a session by email address");
  lookup->add_option("email", email, "Email address")->required();
  lookup->add_option("--fixture", fixture, "Fixture JSON with MX records and directories");
  lookup->add_option("--at", at, "Clock value in ms for fixture lookups");
  lookup->add_option("--connect", connect, "host:port of a running usl-serve");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      mmlab::Scenario sc = load(scenario_path, seed);
      auto art = mmlab::run_scenario(sc, protocol.empty() ? sc.protocol : protocol, out_dir(out));
      print_run(art);
      return art.result.audit.ok ? 0 : 2;
    }
    if (*cmp) {
      mmlab::Scenario sc = load(scenario_path, seed);
      auto rep = mmlab::compare(sc, pair[0], pair[1], out_dir(out));
      print_run(rep.a);
      print_run(rep.b);
      std::cout << rep.json["deltas"].dump() << "\n" << rep.json["checks"].dump() << "\n";
      return rep.a.result.audit.ok && rep.b.result.audit.ok ? 0 : 2;
    }
    if (*val) {
      mmlab::Scenario sc = mmlab::load_scenario(scenario_path);
      sc.config();
      std::cout << sc.name << ": ok (" << sc.topology.size() << " nodes, " << sc.movement.size() << " mobiles)\n";
      return 0;
    }
    if (*serve) {
      auto fx = mmlab::usl::load_fixture_file(fixture);
      const auto t0 = std::chrono::steady_clock::now();
      mmlab::usl::Locator loc(fx.resolver, fx.directory, [t0] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      });
      mmlab::usl::Server server(loc);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << bind << ":" << server.start(port, bind) << std::endl;
      server.wait();
      g_server = nullptr;
      return 0;
    }
    if (*lookup) {
      nlohmann::json resp;
      if (!connect.empty()) {
        const auto colon = connect.rfind(':');
        if (colon == std::string::npos) throw mmlab::Error(mmlab::Errc::ValidationError, "--connect wants host:port");
        resp = mmlab::usl::client_request(connect.substr(0, colon), std::stoi(connect.substr(colon + 1)),
                                          {{"verb", "lookup"}, {"email", email}});
      } else {
        auto fx = mmlab::usl::load_fixture_file(fixture);
        mmlab::usl::Locator loc(fx.resolver, fx.directory, [at] { return at; });
        resp = mmlab::usl::handle_request(loc, {{"verb", "lookup"}, {"email", email}});
      }
      if (resp.value("ok", false)) {
        std::cout << resp["record"].dump(2) << "\n";
        return 0;
      }
      std::cerr << resp.value("error", "Error") << ": " << resp.value("message", "") << "\n";
      return 1;
    }
  } catch (const mmlab::Error& e) {
    std::cerr << mmlab::errc_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
