#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <csignal>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
};

// Runs the CLI through the shell, capturing stdout and stderr together.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MMLAB_CLI + "\" " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) o.out += buf.data();
  const int raw = pclose(p);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

std::string src(const std::string& rel) { return std::string("\"") + MMLAB_SOURCE_DIR + "/" + rel + "\""; }

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("mmlab-cli-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("validate accepts the bundled scenarios") {
  for (const char* n : {"intra-domain-walk", "two-domain-walk", "rapid-crossing", "mcast-unaware", "bt-baseline"}) {
    const Outcome o = cli("validate --scenario " + src(std::string("scenarios/") + n + ".json"));
    CHECK(o.status == 0);
    CHECK(o.out.find(n) != std::string::npos);
  }
}

TEST_CASE("malformed and invalid scenarios exit non-zero with the error kind") {
  const fs::path d = scratch("bad");
  std::ofstream(d / "broken.json") << "{\n \"name\": \"x\",\n \"seed\": }\n";
  Outcome o = cli("validate --scenario \"" + (d / "broken.json").string() + "\"");
  CHECK(o.status != 0);
  CHECK(o.out.find("ParseError") != std::string::npos);
  CHECK(o.out.find("line 3") != std::string::npos);

  std::ifstream in(std::string(MMLAB_SOURCE_DIR) + "/scenarios/rapid-crossing.json");
  nlohmann::json doc = nlohmann::json::parse(in);
  doc["movement"][0]["mn"] = "phantom";
  std::ofstream(d / "ghost.json") << doc.dump(1);
  o = cli("run --scenario \"" + (d / "ghost.json").string() + "\"");
  CHECK(o.status != 0);
  CHECK(o.out.find("ValidationError") != std::string::npos);
  CHECK(o.out.find("phantom") != std::string::npos);

  o = cli("run --scenario \"" + (d / "missing.json").string() + "\"");
  CHECK(o.status != 0);
  fs::remove_all(d);
}

TEST_CASE("run writes artifacts to --out and honours SIM_OUT_DIR") {
  const fs::path d = scratch("run");
  Outcome o = cli("run --scenario " + src("scenarios/intra-domain-walk.json") + " --out \"" + (d / "x").string() + "\"");
  CHECK(o.status == 0);
  CHECK(o.out.find("audit ok") != std::string::npos);
  for (const char* f : {"summary.json", "packets.csv", "handovers.csv", "trace.jsonl"}) CHECK(fs::exists(d / "x" / f));
  std::ifstream s(d / "x" / "summary.json");
  const auto summary = nlohmann::json::parse(s);
  CHECK(summary["handovers"]["counts"]["inter_map"] == 0);
  CHECK(summary["seed"] == 11);

  o = cli("run --scenario " + src("scenarios/intra-domain-walk.json") + " --seed 12 --protocol mip6_bt");
  CHECK(o.status == 0);
  CHECK(o.out.find("protocol mip6_bt") != std::string::npos);

  const std::string env = "SIM_OUT_DIR=\"" + (d / "env").string() + "\" ";
  const std::string cmd = env + "\"" + MMLAB_CLI + "\" run --scenario " + src("scenarios/mcast-unaware.json") + " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(d / "env" / "summary.json"));
  fs::remove_all(d);
}

TEST_CASE("compare reports deltas for two variants") {
  const fs::path d = scratch("cmp");
  const Outcome o = cli("compare --scenario " + src("scenarios/rapid-crossing.json") +
                        " --protocol m_hmip:nobicast m_hmip --out \"" + (d / "c").string() + "\"");
  CHECK(o.status == 0);
  REQUIRE(fs::exists(d / "c" / "compare.json"));
  std::ifstream in(d / "c" / "compare.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["deltas"]["lost"].get<std::int64_t>() <= 0);
  CHECK(fs::exists(d / "c" / "a" / "summary.json"));
  CHECK(fs::exists(d / "c" / "b" / "summary.json"));
  fs::remove_all(d);
}

TEST_CASE("usl-lookup prints the fixture record or fails") {
  Outcome o = cli("usl-lookup alice@example.org --fixture " + src("fixtures/usl.json"));
  CHECK(o.status == 0);
  CHECK(o.out.find("198.51.100.7:5060") != std::string::npos);
  o = cli("usl-lookup zed@example.org --fixture " + src("fixtures/usl.json"));
  CHECK(o.status != 0);
  CHECK(o.out.find("NotRegistered") != std::string::npos);
  o = cli("usl-lookup alice@example.org --at 130000 --fixture " + src("fixtures/usl.json"));
  CHECK(o.status != 0);
  o = cli("usl-lookup eve@nomail.test --fixture " + src("fixtures/usl.json"));
  CHECK(o.out.find("NoMxRecord") != std::string::npos);
}

TEST_CASE("usl-serve answers usl-lookup over TCP") {
  const int port = 20000 + static_cast<int>(::getpid() % 20000);
  const std::string serve = std::string("\"") + MMLAB_CLI + "\" usl-serve --port " + std::to_string(port) +
                            " --fixture " + src("fixtures/usl.json") + " > /dev/null 2>&1 & echo $!";
  FILE* p = popen(serve.c_str(), "r");
  REQUIRE(p);
  char buf[64] = {};
  std::fgets(buf, sizeof buf, p);
  pclose(p);
  const int pid = std::atoi(buf);
  REQUIRE(pid > 0);
  Outcome o;
  for (int i = 0; i < 50; ++i) {
    o = cli("usl-lookup alice@example.org --connect 127.0.0.1:" + std::to_string(port));
    if (o.status == 0) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  CHECK(o.status == 0);
  CHECK(o.out.find("conf-1") != std::string::npos);
  ::kill(pid, SIGTERM);
  for (int i = 0; i < 50 && ::kill(pid, 0) == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}
