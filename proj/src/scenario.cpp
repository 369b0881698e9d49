#include "mmlab/scenario.hpp"

#include <fstream>
#include <future>
#include <sstream>

#include "mmlab/error.hpp"

namespace mmlab {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw Error(Errc::ParseError, "field " + path + ": " + what);
}

const json* opt(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::int64_t get_int(const json& obj, const char* key, const std::string& path, std::int64_t dflt) {
  const json* v = opt(obj, key);
  if (!v) return dflt;
  if (!v->is_number_integer()) field_error(path + "." + key, "expected an integer");
  return v->get<std::int64_t>();
}

double get_num(const json& obj, const char* key, const std::string& path, double dflt) {
  const json* v = opt(obj, key);
  if (!v) return dflt;
  if (!v->is_number()) field_error(path + "." + key, "expected a number");
  return v->get<double>();
}

bool get_bool(const json& obj, const char* key, const std::string& path, bool dflt) {
  const json* v = opt(obj, key);
  if (!v) return dflt;
  if (!v->is_boolean()) field_error(path + "." + key, "expected true or false");
  return v->get<bool>();
}

std::string get_str(const json& obj, const char* key, const std::string& path, const std::string& dflt) {
  const json* v = opt(obj, key);
  if (!v) return dflt;
  if (v->is_number_integer()) return std::to_string(v->get<std::int64_t>());
  if (!v->is_string()) field_error(path + "." + key, "expected a string");
  return v->get<std::string>();
}

/// Reads "<base>_us" (integer) or "<base>_s" (number of seconds).
SimTime get_time(const json& obj, const std::string& base, const std::string& path, SimTime dflt) {
  if (opt(obj, (base + "_us").c_str())) return SimTime::us(get_int(obj, (base + "_us").c_str(), path, 0));
  if (opt(obj, (base + "_s").c_str())) {
    return SimTime::us(std::llround(get_num(obj, (base + "_s").c_str(), path, 0) * 1e6));
  }
  return dflt;
}

NodeId node_ref(const Topology& t, const std::string& id, const std::string& path) {
  auto n = t.find(id);
  if (!n) throw Error(Errc::ValidationError, path + " names unknown node '" + id + "'");
  return *n;
}

SubnetId subnet_ref(const Topology& t, const std::string& id, const std::string& path) {
  auto s = t.find_subnet(id);
  if (!s || !t.is_access_subnet(*s)) throw Error(Errc::ValidationError, path + " names unknown subnet '" + id + "'");
  return *s;
}

Address group_ref(const json& obj, const std::string& path) {
  const json* v = opt(obj, "group");
  if (!v) field_error(path + ".group", "missing");
  if (!v->is_number_unsigned()) field_error(path + ".group", "expected a non-negative group number");
  return Address::group(v->get<std::uint32_t>());
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::ValidationError, "cannot write " + p.string());
  out << content;
}

}  // namespace

void apply_protocol(SimConfig& cfg, const std::string& variant) {
  const auto colon = variant.find(':');
  const std::string name = variant.substr(0, colon);
  auto proto = protocol_from_name(name);
  if (!proto) throw Error(Errc::ValidationError, "unknown protocol '" + name + "'");
  cfg.protocol = *proto;
  if (colon == std::string::npos) return;
  std::stringstream opts(variant.substr(colon + 1));
  std::string o;
  while (std::getline(opts, o, ',')) {
    if (o == "nobicast") {
      cfg.mhmip.bicast = false;
    } else if (o == "bicast") {
      cfg.mhmip.bicast = true;
    } else if (o == "forceadopt") {
      cfg.mhmip.fallback = false;
    } else if (o == "nohao") {
      cfg.mhmip.home_address_option = false;
    } else if (o == "mnforward") {
      cfg.mhmip.forward_to_new_map = false;
    } else if (o == "ro") {
      cfg.route_optimization = true;
    } else {
      throw Error(Errc::ValidationError, "unknown protocol option '" + o + "'");
    }
  }
}

SimConfig Scenario::config(const std::string& protocol_variant) const {
  SimConfig cfg = base;
  cfg.seed = seed;
  cfg.duration = duration;
  apply_protocol(cfg, protocol_variant);
  for (const MovementSpec& m : movement) {
    const SubnetId start = *topology.initial_subnet(m.mn);
    if (m.random) {
      RandomStream rs(seed, "walk/" + topology.name(m.mn));
      cfg.movement.push_back(random_walk(topology, m.mn, start, m.mean_dwell, m.until, rs));
    } else {
      cfg.movement.push_back(scripted_path(m.mn, start, m.steps));
    }
  }
  return cfg;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, origin + ": line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::ParseError, origin + ": top level must be an object");

  Scenario sc;
  sc.name = get_str(doc, "name", "", origin);
  sc.seed = static_cast<std::uint64_t>(get_int(doc, "seed", "", 1));
  sc.duration = get_time(doc, "duration", "", SimTime::sec(10));
  if (sc.duration <= SimTime{}) throw Error(Errc::ValidationError, "duration must be positive");
  sc.protocol = get_str(doc, "protocol", "", "m_hmip");
  const json* topo = opt(doc, "topology");
  if (!topo) field_error("topology", "missing");
  sc.topology = Topology::from_json(*topo);
  const Topology& t = sc.topology;

  SimConfig& cfg = sc.base;
  if (const json* tm = opt(doc, "timers")) {
    cfg.timers.l2_handoff = get_time(*tm, "l2_handoff", "timers", cfg.timers.l2_handoff);
    cfg.timers.ra_wait = get_time(*tm, "ra_wait", "timers", cfg.timers.ra_wait);
    cfg.timers.addr_formation = get_time(*tm, "addr_formation", "timers", cfg.timers.addr_formation);
    if (opt(*tm, "addr_config_us") || opt(*tm, "addr_config_s")) {
      const SimTime total = get_time(*tm, "addr_config", "timers", cfg.timers.addr_config());
      cfg.timers.ra_wait = std::min(cfg.timers.ra_wait, total);
      cfg.timers.addr_formation = total - cfg.timers.ra_wait;
    }
    cfg.timers.bu_processing = get_time(*tm, "bu_processing", "timers", cfg.timers.bu_processing);
    cfg.timers.binding_lifetime = get_time(*tm, "binding_lifetime", "timers", cfg.timers.binding_lifetime);
    if (cfg.timers.l2_handoff < SimTime{} || cfg.timers.addr_formation < SimTime{} ||
        cfg.timers.bu_processing < SimTime{} || cfg.timers.binding_lifetime <= SimTime{}) {
      throw Error(Errc::ValidationError, "timers must be non-negative and the binding lifetime positive");
    }
  }
  if (const json* mc = opt(doc, "mcast")) {
    cfg.mcast.graft_per_hop = get_time(*mc, "graft_per_hop", "mcast", cfg.mcast.graft_per_hop);
  }
  if (const json* mh = opt(doc, "mhmip")) {
    cfg.mhmip.bicast_duration = get_time(*mh, "bicast_duration", "mhmip", cfg.mhmip.bicast_duration);
    cfg.mhmip.rapid_window = get_time(*mh, "rapid_window", "mhmip", cfg.mhmip.rapid_window);
    cfg.mhmip.rapid_threshold = static_cast<int>(get_int(*mh, "rapid_threshold", "mhmip", cfg.mhmip.rapid_threshold));
    cfg.mhmip.bicast = get_bool(*mh, "bicast", "mhmip", cfg.mhmip.bicast);
    cfg.mhmip.fallback = get_bool(*mh, "fallback", "mhmip", cfg.mhmip.fallback);
    cfg.mhmip.home_address_option = get_bool(*mh, "home_address_option", "mhmip", cfg.mhmip.home_address_option);
    const std::string fwd = get_str(*mh, "forward_to", "mhmip", "new_map");
    if (fwd != "new_map" && fwd != "mn") throw Error(Errc::ValidationError, "mhmip.forward_to must be new_map or mn");
    cfg.mhmip.forward_to_new_map = fwd == "new_map";
  }
  if (const json* m6 = opt(doc, "mip6")) {
    cfg.route_optimization = get_bool(*m6, "route_optimization", "mip6", false);
    if (const json* cns = opt(*m6, "correspondents")) {
      for (std::size_t i = 0; i < cns->size(); ++i) {
        const std::string path = "mip6.correspondents[" + std::to_string(i) + "]";
        if (!(*cns)[i].is_string()) field_error(path, "expected a node id");
        cfg.correspondents.push_back(node_ref(t, (*cns)[i].get<std::string>(), path));
      }
    }
  }
  if (const json* tr = opt(doc, "traffic")) {
    if (!tr->is_array()) field_error("traffic", "expected an array");
    for (std::size_t i = 0; i < tr->size(); ++i) {
      const std::string path = "traffic[" + std::to_string(i) + "]";
      const json& e = (*tr)[i];
      CbrSourceSpec spec;
      spec.source = node_ref(t, get_str(e, "source", path, ""), path + ".source");
      spec.group = group_ref(e, path);
      spec.rate_kbps = get_num(e, "rate_kbps", path, spec.rate_kbps);
      spec.packet_bytes = static_cast<std::uint32_t>(get_int(e, "packet_bytes", path, spec.packet_bytes));
      spec.start = get_time(e, "start", path, SimTime{});
      spec.stop = get_time(e, "stop", path, sc.duration);
      spec.validate();
      cfg.traffic.push_back(spec);
    }
  }
  if (const json* ls = opt(doc, "listeners")) {
    if (!ls->is_array()) field_error("listeners", "expected an array");
    for (std::size_t i = 0; i < ls->size(); ++i) {
      const std::string path = "listeners[" + std::to_string(i) + "]";
      const json& e = (*ls)[i];
      cfg.listeners.push_back({node_ref(t, get_str(e, "node", path, ""), path + ".node"), group_ref(e, path)});
    }
  }
  if (const json* mv = opt(doc, "movement")) {
    if (!mv->is_array()) field_error("movement", "expected an array");
    for (std::size_t i = 0; i < mv->size(); ++i) {
      const std::string path = "movement[" + std::to_string(i) + "]";
      const json& e = (*mv)[i];
      MovementSpec m;
      m.mn = node_ref(t, get_str(e, "mn", path, ""), path + ".mn");
      if (t.role(m.mn) != Role::Mobile) throw Error(Errc::ValidationError, path + ".mn '" + t.name(m.mn) + "' is not a mobile node");
      const std::string kind = get_str(e, "kind", path, "");
      const json empty = json::object();
      const json* params = opt(e, "params");
      const json& p = params ? *params : empty;
      if (kind == "random") {
        m.random = true;
        m.mean_dwell = get_time(p, "mean_dwell", path + ".params", SimTime{});
        m.until = get_time(p, "until", path + ".params", sc.duration);
        if (m.mean_dwell <= SimTime{}) throw Error(Errc::ValidationError, path + ".params.mean_dwell must be positive");
      } else if (kind == "scripted") {
        const json* steps = opt(p, "steps");
        if (!steps || !steps->is_array()) field_error(path + ".params.steps", "expected an array");
        for (std::size_t k = 0; k < steps->size(); ++k) {
          const std::string sp = path + ".params.steps[" + std::to_string(k) + "]";
          const json& st = (*steps)[k];
          m.steps.push_back({get_time(st, "at", sp, SimTime{}), subnet_ref(t, get_str(st, "subnet", sp, ""), sp + ".subnet")});
        }
        scripted_path(m.mn, *t.initial_subnet(m.mn), m.steps);
      } else {
        throw Error(Errc::ValidationError, path + ".kind must be random or scripted");
      }
      sc.movement.push_back(std::move(m));
    }
  }
  apply_protocol(cfg, sc.protocol);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario sc = parse_scenario(ss.str(), path.string());
  if (sc.name.empty()) sc.name = path.stem().string();
  return sc;
}

nlohmann::json summary_json(const Scenario& sc, const SimConfig& cfg, const Simulation& sim, const RunResult& r) {
  const Topology& t = sim.topology();
  json j;
  j["scenario"] = sc.name;
  j["protocol"] = std::string(protocol_name(cfg.protocol));
  j["options"] = {{"bicast", cfg.mhmip.bicast},
                  {"fallback", cfg.mhmip.fallback},
                  {"home_address_option", cfg.mhmip.home_address_option},
                  {"forward_to", cfg.mhmip.forward_to_new_map ? "new_map" : "mn"}};
  j["seed"] = cfg.seed;
  j["duration_us"] = cfg.duration.count();
  j["events_executed"] = r.summary.events_executed;
  j["events_pending"] = r.summary.events_pending;
  j["audit"] = {{"ok", r.audit.ok},
                {"entries", r.audit.entries},
                {"delivered", r.audit.delivered},
                {"lost", r.audit.lost},
                {"in_flight", r.audit.in_flight},
                {"unaccounted", r.audit.unaccounted},
                {"problems", r.audit.problems}};
  j["handovers"] = to_json(r.report);
  j["signaling"] = {{"global", r.signaling.global},
                    {"local", r.signaling.local},
                    {"refresh", r.signaling.refresh},
                    {"acks", r.signaling.acks}};
  j["application"] = {{"deliveries", r.app_deliveries},
                      {"duplicates_filtered", r.app_duplicates_filtered},
                      {"duplicates_passed", r.app_duplicates_passed}};
  std::map<LossReason, std::uint64_t> reasons;
  for (const auto& o : sim.ledger().entries()) {
    if (o.outcome() == Outcome::Lost) ++reasons[o.reason];
  }
  j["loss_reasons"] = json::object();
  for (const auto& [why, n] : reasons) j["loss_reasons"][std::string(loss_reason_name(why))] = n;
  j["streams"] = json::array();
  std::set<std::pair<std::size_t, NodeId>> pairs;
  for (const auto& o : sim.ledger().entries()) pairs.insert({o.stream, o.receiver});
  for (const auto& [si, rcv] : pairs) {
    const StreamInfo& info = sim.ledger().streams()[si];
    StreamStats s = stream_stats(sim.ledger(), info.key, rcv);
    j["streams"].push_back(to_json(s, t.name(info.source_node), t.name(rcv)));
  }
  return j;
}

namespace {

std::string packets_csv(const Simulation& sim) {
  const Topology& t = sim.topology();
  std::ostringstream os;
  os << "uid,receiver,seq,sent_us,outcome,delivered_us,delay_us,reason,copies\n";
  for (const auto& o : sim.ledger().entries()) {
    const Outcome oc = o.outcome();
    os << o.uid << ',' << t.name(o.receiver) << ',' << o.seq << ',' << o.sent_at.count() << ',' << outcome_name(oc)
       << ',';
    if (oc == Outcome::Delivered) {
      os << o.delivered_at.count() << ',' << o.delay().count() << ",,";
    } else {
      os << ",," << (oc == Outcome::Lost ? loss_reason_name(o.reason) : "") << ',';
    }
    os << o.copies << '\n';
  }
  return os.str();
}

std::string handovers_csv(const Simulation& sim, const RunResult& r) {
  const Topology& t = sim.topology();
  auto node = [&](NodeId n) { return n == kNoNode ? std::string() : t.name(n); };
  std::ostringstream os;
  os << "index,mn,kind,from,to,map_before,map_after,l2_start_us,l2_end_us,l3_complete_us,gap_incl_l2_us,"
        "gap_excl_l2_us,class,completed,packets_lost,packets_duplicated,global_signaling,local_signaling\n";
  for (const auto& h : r.handovers) {
    os << h.index << ',' << t.name(h.mn) << ',' << handover_kind_name(h.kind) << ',' << t.subnet_name(h.from_subnet)
       << ',' << t.subnet_name(h.to_subnet) << ',' << node(h.map_before) << ',' << node(h.map_after) << ','
       << h.l2_start.count() << ',' << h.l2_end.count() << ',';
    if (h.completed) {
      os << h.l3_complete.count() << ',' << h.gap_incl_l2.count() << ',' << h.gap_excl_l2.count() << ','
         << disturbance_name(classify(h.gap_excl_l2)) << ",1,";
    } else {
      os << ",,,,0,";
    }
    os << h.packets_lost << ',' << h.packets_duplicated << ',' << h.global_signaling_msgs << ','
       << h.local_signaling_msgs << '\n';
  }
  return os.str();
}

}  // namespace

RunArtifacts run_scenario(const Scenario& sc, const std::string& variant,
                          const std::optional<std::filesystem::path>& out_dir) {
  SimConfig cfg = sc.config(variant);
  MemoryTrace digest(false);
  std::ofstream trace_file;
  std::unique_ptr<JsonlTrace> jsonl;
  struct Tee final : TraceSink {
    TraceSink* a;
    TraceSink* b;
    void record(SimTime t, std::string_view n, std::string_view k, std::string_view d) override {
      a->record(t, n, k, d);
      if (b) b->record(t, n, k, d);
    }
  } tee;
  tee.a = &digest;
  tee.b = nullptr;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    trace_file.open(*out_dir / "trace.jsonl", std::ios::binary);
    if (!trace_file) throw Error(Errc::ValidationError, "cannot write " + (*out_dir / "trace.jsonl").string());
    jsonl = std::make_unique<JsonlTrace>(trace_file);
    tee.b = jsonl.get();
  }
  Simulation sim(sc.topology, cfg, &tee);
  RunArtifacts art;
  art.result = sim.run();
  art.summary = summary_json(sc, cfg, sim, art.result);
  art.trace_digest = digest.digest();
  art.summary["trace"] = {{"records", digest.count()}, {"digest", digest.digest()}};
  if (out_dir) {
    write_file(*out_dir / "summary.json", art.summary.dump(2) + "\n");
    write_file(*out_dir / "packets.csv", packets_csv(sim));
    write_file(*out_dir / "handovers.csv", handovers_csv(sim, art.result));
  }
  return art;
}

ComparisonReport compare(const Scenario& sc, const std::string& variant_a, const std::string& variant_b,
                         const std::optional<std::filesystem::path>& out_dir) {
  auto sub = [&](const char* tag) -> std::optional<std::filesystem::path> {
    if (!out_dir) return std::nullopt;
    return *out_dir / tag;
  };
  auto fa = std::async(std::launch::async, [&] { return run_scenario(sc, variant_a, sub("a")); });
  auto fb = std::async(std::launch::async, [&] { return run_scenario(sc, variant_b, sub("b")); });
  ComparisonReport rep{fa.get(), fb.get(), {}};
  const RunResult& a = rep.a.result;
  const RunResult& b = rep.b.result;

  json deltas;
  deltas["lost"] = static_cast<std::int64_t>(b.audit.lost) - static_cast<std::int64_t>(a.audit.lost);
  deltas["delivered"] = static_cast<std::int64_t>(b.audit.delivered) - static_cast<std::int64_t>(a.audit.delivered);
  deltas["global_signaling"] =
      static_cast<std::int64_t>(b.signaling.global) - static_cast<std::int64_t>(a.signaling.global);
  deltas["local_signaling"] = static_cast<std::int64_t>(b.signaling.local) - static_cast<std::int64_t>(a.signaling.local);
  deltas["global_handovers"] =
      static_cast<std::int64_t>(b.report.global_handovers) - static_cast<std::int64_t>(a.report.global_handovers);
  deltas["gaps"] = json::object();
  for (HandoverKind k : kAllHandoverKinds) {
    auto ga = a.report.gaps.find(k);
    auto gb = b.report.gaps.find(k);
    if (ga == a.report.gaps.end() || gb == b.report.gaps.end()) continue;
    deltas["gaps"][std::string(handover_kind_name(k))] = {{"p50_ms", (gb->second.p50 - ga->second.p50).millis()},
                                                         {"p90_ms", (gb->second.p90 - ga->second.p90).millis()}};
  }
  bool per_handover_loss = a.handovers.size() == b.handovers.size();
  for (std::size_t i = 0; per_handover_loss && i < a.handovers.size(); ++i) {
    per_handover_loss = b.handovers[i].packets_lost <= a.handovers[i].packets_lost;
  }
  json checks = {{"same_moves", a.handovers.size() == b.handovers.size()},
                 {"global_signaling_b_le_a", b.signaling.global <= a.signaling.global},
                 {"loss_b_le_a", b.audit.lost <= a.audit.lost},
                 {"per_handover_loss_b_le_a", per_handover_loss},
                 {"audit_a", a.audit.ok},
                 {"audit_b", b.audit.ok}};
  rep.json = {{"scenario", sc.name},
              {"seed", sc.seed},
              {"a", {{"variant", variant_a}, {"summary", rep.a.summary}}},
              {"b", {{"variant", variant_b}, {"summary", rep.b.summary}}},
              {"deltas", deltas},
              {"checks", checks}};
  if (out_dir) write_file(*out_dir / "compare.json", rep.json.dump(2) + "\n");
  return rep;
}

}  // namespace mmlab
