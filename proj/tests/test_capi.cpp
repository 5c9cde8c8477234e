#include <cstdlib>
#include <string>
#include <vector>

#include "doctest.h"
#include "harl/harl.h"

TEST_SUITE("capi") {

TEST_CASE("game handle") {
  harl_game* g = nullptr;
  REQUIRE(harl_game_create(R"({"name": "xor", "n": 4})", &g) == HARL_OK);
  int n = 0, s = 0, j = 0;
  double gamma = -1.0;
  CHECK(harl_game_info(g, &n, &s, &j, &gamma) == HARL_OK);
  CHECK(n == 4);
  CHECK(s == 1);
  CHECK(j == 16);
  CHECK(gamma == 0.0);
  int a = 0;
  CHECK(harl_game_n_actions(g, 3, &a) == HARL_OK);
  CHECK(a == 2);
  CHECK(harl_game_n_actions(g, 4, &a) == HARL_ERR_INVALID_ARGUMENT);
  double opt = 0.0;
  CHECK(harl_game_optimal_return(g, &opt) == HARL_OK);
  CHECK(opt == doctest::Approx(1.0));
  char* text = nullptr;
  CHECK(harl_game_to_json(g, &text) == HARL_OK);
  CHECK(std::string(text).find("n_agents") != std::string::npos);
  harl_string_free(text);
  harl_game_destroy(g);
}

TEST_CASE("errors carry a status and a message") {
  harl_game* g = nullptr;
  CHECK(harl_game_create("{not json", &g) == HARL_ERR_CONFIG);
  CHECK(g == nullptr);
  CHECK(std::string(harl_last_error()).size() > 0);
  CHECK(harl_game_create(R"({"name": "nope"})", &g) == HARL_ERR_CONFIG);
  CHECK(harl_game_create(nullptr, &g) == HARL_ERR_INVALID_ARGUMENT);
  CHECK(std::string(harl_status_name(HARL_ERR_CHECK_FAILED)) == "check_failed");
  harl_game_destroy(nullptr);
  harl_policy_destroy(nullptr);
  harl_trainer_destroy(nullptr);
}

TEST_CASE("policies, evaluation and gaps") {
  harl_game* g = nullptr;
  REQUIRE(harl_game_create(R"({"name": "example2"})", &g) == HARL_OK);
  harl_policy* p = nullptr;
  REQUIRE(harl_policy_from_json(g, R"({"agents": [[[0.7, 0.3]], [[0.7, 0.3]]]})", &p) == HARL_OK);
  double J = 0.0;
  CHECK(harl_evaluate(g, p, &J) == HARL_OK);
  CHECK(J == doctest::Approx(0.75));
  double prob = 0.0;
  CHECK(harl_policy_prob(p, 1, 0, 1, &prob) == HARL_OK);
  CHECK(prob == doctest::Approx(0.3));

  std::vector<double> trace(4);
  CHECK(harl_policy_iteration(g, p, 3, 0, trace.data()) == HARL_OK);
  for (int k = 1; k < 4; ++k) CHECK(trace[k] >= trace[k - 1] - 1e-9);
  double gaps[2] = {-1.0, -1.0};
  CHECK(harl_best_response_gaps(g, p, gaps, 2) == HARL_OK);
  CHECK(gaps[0] < 1e-6);
  CHECK(harl_best_response_gaps(g, p, gaps, 1) == HARL_ERR_INVALID_ARGUMENT);
  harl_policy_destroy(p);

  int joint[1] = {3};
  REQUIRE(harl_policy_deterministic(g, joint, &p) == HARL_OK);
  CHECK(harl_best_response_gaps(g, p, gaps, 2) == HARL_OK);
  CHECK(gaps[0] == doctest::Approx(3.0));
  char* text = nullptr;
  CHECK(harl_policy_to_json(p, &text) == HARL_OK);
  harl_string_free(text);
  harl_policy_destroy(p);

  REQUIRE(harl_policy_uniform(g, &p) == HARL_OK);
  CHECK(harl_evaluate(g, p, &J) == HARL_OK);
  CHECK(J == doctest::Approx(0.75));
  harl_policy_destroy(p);
  CHECK(harl_policy_from_json(g, R"({"agents": [[[0.9, 0.3]], [[0.5, 0.5]]]})", &p) != HARL_OK);
  harl_game_destroy(g);
}

TEST_CASE("trainer handle") {
  harl_trainer* t = nullptr;
  const char* train = R"({"algorithm": "happo", "n_rollout_threads": 2, "episode_length": 10,
                          "num_env_steps": 100, "hidden_sizes": [8], "critic_hidden_sizes": [8]})";
  REQUIRE(harl_trainer_create(R"({"name": "xor", "n": 2})", train, 1, &t) == HARL_OK);
  char* result = nullptr;
  CHECK(harl_trainer_run(t, &result) == HARL_OK);
  std::string r(result);
  CHECK(r.find("round,env_steps") != std::string::npos);
  harl_string_free(result);
  harl_trainer_destroy(t);
  CHECK(harl_trainer_create(R"({"name": "xor", "n": 2})", R"({"algorithm": "hadqn"})", 1, &t) ==
        HARL_ERR_CONFIG);
}

TEST_CASE("command reports") {
  char* rep = nullptr;
  CHECK(harl_cmd_repro("example2", 0, &rep) == HARL_OK);
  CHECK(std::string(rep).find("\"passed\": true") != std::string::npos);
  harl_string_free(rep);
  rep = nullptr;
  CHECK(harl_cmd_props("nope", 0, &rep) == HARL_ERR_CONFIG);
  CHECK(rep == nullptr);
  CHECK(harl_cmd_props("zero_mean", 0, &rep) == HARL_OK);
  harl_string_free(rep);
  CHECK(harl_cmd_train("/nonexistent/config.json", nullptr, 0, "", &rep) == HARL_ERR_CONFIG);
}

}
