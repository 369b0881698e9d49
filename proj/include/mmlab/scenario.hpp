#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmlab/simulation.hpp"

namespace mmlab {

struct MovementSpec {
  NodeId mn = kNoNode;
  bool random = false;
  SimTime mean_dwell;
  SimTime until;  // random walks stop here (defaults to the run duration)
  std::vector<MovementStep> steps;
};

/// A parsed, validated scenario file.
struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  SimTime duration = SimTime::sec(10);
  std::string protocol = "m_hmip";
  Topology topology;
  SimConfig base;  // everything except protocol, seed and movement
  std::vector<MovementSpec> movement;

  /// Resolved configuration for one protocol variant ("name" or "name:opt").
  /// Random walks are drawn from the seed, so every variant sees the same moves.
  SimConfig config(const std::string& protocol_variant) const;
  SimConfig config() const { return config(protocol); }
};

/// Throws ParseError naming the line (syntax) or field (types), and
/// ValidationError naming the violated rule or unknown id.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

/// Applies "m_hmip:nobicast", "m_hmip:forceadopt", "m_hmip:nohao",
/// "m_hmip:mnforward" style variants. Throws ValidationError.
void apply_protocol(SimConfig& cfg, const std::string& variant);

nlohmann::json summary_json(const Scenario& sc, const SimConfig& cfg, const Simulation& sim, const RunResult& r);

struct RunArtifacts {
  RunResult result;
  nlohmann::json summary;
  std::uint64_t trace_digest = 0;
};

/// Runs one variant. With an output directory, writes trace.jsonl,
/// summary.json, packets.csv and handovers.csv there.
RunArtifacts run_scenario(const Scenario& sc, const std::string& variant,
                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct ComparisonReport {
  RunArtifacts a;
  RunArtifacts b;
  nlohmann::json json;
};

/// Two runs on identical seed, topology, traffic and movement, executed in
/// parallel; writes compare.json plus per-run artifacts in subdirectories.
ComparisonReport compare(const Scenario& sc, const std::string& variant_a, const std::string& variant_b,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace mmlab
