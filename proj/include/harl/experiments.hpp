#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harl/hatrl.hpp"
#include "json.hpp"

namespace harl {

// Top-level experiment file:
//   {"algorithm": "happo", "env": {"name": "grid_rendezvous", ...},
//    "scheme": "sequential_random", "seeds": [0, 1], "train": {...},
//    "trust_region": {...}, "exact": {...}, "out_dir": "runs"}
struct RunConfig {
  std::string algorithm = "happo";
  nlohmann::json env;
  std::string scheme;  // empty: engine default
  std::vector<std::uint64_t> seeds{0};
  nlohmann::json train = nlohmann::json::object();
  nlohmann::json trust_region = nlohmann::json::object();
  // exact-iter: {"mode": "sequential" | "simultaneous" | "haml", "init": "uniform" |
  // "random" | [p0 ...], "drift": name, "order": [..]}
  nlohmann::json exact = nlohmann::json::object();
  std::string out_dir = "runs";
};

RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

TrustRegionConfig trust_region_config_from_json(const nlohmann::json& doc);

// Every command returns a JSON report. Check failures (gap breach, failed
// suite) are flagged by "passed": false; configuration and runtime problems
// throw.
nlohmann::json cmd_train(const RunConfig& config);
nlohmann::json cmd_exact_iter(const RunConfig& config);
// case: example2, xor or diffgame. ns lists the agent counts for xor.
nlohmann::json cmd_repro(const std::string& which, const std::vector<int>& ns = {2, 4, 6});
// policy_path: policy JSON ({"agents": ...}) or a training checkpoint manifest.
nlohmann::json cmd_verify_ne(const RunConfig& config, const std::string& policy_path,
                             double tolerance);
nlohmann::json cmd_props(const std::vector<std::string>& suites, std::uint64_t seed);
nlohmann::json cmd_export_game(const RunConfig& config, const std::string& out_path);

// Closed-form gradient rounds on r = a1 * a2.
struct DiffGameTrace {
  double a1 = 0.0, a2 = 0.0, r = 0.0;
};
std::vector<DiffGameTrace> diffgame_round(double a1, double a2, double lr, bool sequential);

}  // namespace harl
