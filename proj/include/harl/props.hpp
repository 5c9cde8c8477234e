#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harl/game.hpp"
#include "json.hpp"

namespace harl {

struct SuiteVerdict {
  std::string suite;
  bool passed = false;
  double seconds = 0.0;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

// decomposition, zero_mean, estimator, monotonicity, hadf, improvement, haml, gradients.
const std::vector<std::string>& suite_names();
bool is_suite(const std::string& name);
// Throws ErrorCode::config for an unknown suite.
SuiteVerdict run_suite(const std::string& name, std::uint64_t seed);

// Random fixture with n in {2, 3}, |S| <= 5 and |A^i| <= 3.
CooperativeMarkovGame random_fixture_game(Rng& rng);

SuiteVerdict suite_decomposition(std::uint64_t seed, int n_games = 50);
SuiteVerdict suite_zero_mean(std::uint64_t seed, int n_games = 50);
SuiteVerdict suite_estimator(std::uint64_t seed, int n_tuples = 20);
SuiteVerdict suite_monotonicity(std::uint64_t seed, int n_games = 10, int n_seeds = 10,
                                int rounds = 50);
SuiteVerdict suite_hadf(std::uint64_t seed, int n_triples = 10000);
SuiteVerdict suite_improvement(std::uint64_t seed, int n_games = 20);
SuiteVerdict suite_haml(std::uint64_t seed, int max_rounds = 300);
SuiteVerdict suite_gradients(std::uint64_t seed);

}  // namespace harl
