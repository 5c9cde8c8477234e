#include "doctest.h"
#include "harl/game.hpp"
#include "harl/json_io.hpp"
#include "harl/oracle.hpp"

using namespace harl;

TEST_SUITE("game") {

TEST_CASE("joint index is row-major with agent 0 most significant") {
  auto g = make_random_game(3, 2, {2, 3, 2}, 0.9, 1);
  CHECK(g.n_joint() == 12);
  CHECK(g.stride(0) == 6);
  CHECK(g.stride(1) == 2);
  CHECK(g.stride(2) == 1);
  for (int j = 0; j < g.n_joint(); ++j) {
    auto a = g.decode_joint(j);
    CHECK(g.joint_index(a) == j);
    for (int i = 0; i < 3; ++i) CHECK(g.agent_action(j, i) == a[i]);
  }
  std::vector<int> a{1, 2, 0};
  CHECK(g.joint_index(a) == 1 * 6 + 2 * 2 + 0);
}

TEST_CASE("matrix game rewards") {
  auto g = make_matrix_game_example2();
  CHECK(g.n_agents() == 2);
  CHECK(g.gamma() == 0.0);
  CHECK(g.reward(0, 0) == 0.0);
  CHECK(g.reward(0, 1) == 2.0);
  CHECK(g.reward(0, 2) == 2.0);
  CHECK(g.reward(0, 3) == -1.0);
}

TEST_CASE("xor team pays on the two half patterns") {
  auto g = make_xor_team_game(4);
  int paid = 0;
  for (int j = 0; j < g.n_joint(); ++j) paid += g.reward(0, j) == 1.0;
  CHECK(paid == 2);
  CHECK(g.reward(0, g.joint_index(std::vector<int>{0, 0, 1, 1})) == 1.0);
  CHECK(g.reward(0, g.joint_index(std::vector<int>{1, 1, 0, 0})) == 1.0);
  CHECK_THROWS_AS(make_xor_team_game(3), Error);
}

TEST_CASE("random games are valid and reproducible") {
  auto a = make_random_game(2, 4, {3, 2}, 0.9, 7);
  auto b = make_random_game(2, 4, {3, 2}, 0.9, 7);
  CHECK(a == b);
  CHECK_NOTHROW(a.validate());
  for (int s = 0; s < a.n_states(); ++s)
    for (int j = 0; j < a.n_joint(); ++j) {
      double total = 0.0;
      for (double p : a.next_probs(s, j)) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("constructor rejects bad transitions") {
  std::vector<std::vector<double>> reward{{0.0, 0.0, 0.0, 0.0}};
  std::vector<std::vector<std::vector<double>>> bad(1, std::vector<std::vector<double>>(4, {0.5}));
  CHECK_THROWS_AS(CooperativeMarkovGame(2, 1, {2, 2}, 0.5, reward, bad, {1.0}), Error);
  std::vector<std::vector<std::vector<double>>> good(1, std::vector<std::vector<double>>(4, {1.0}));
  CHECK_THROWS_AS(CooperativeMarkovGame(2, 1, {2, 2}, 1.0, reward, good, {1.0}), Error);
  CHECK_THROWS_AS(CooperativeMarkovGame(2, 1, {2, 2}, 0.5, reward, good, {0.3}), Error);
}

TEST_CASE("grid rendezvous") {
  GridRendezvousOptions opt;
  auto g = make_grid_rendezvous(opt);
  CHECK(g.n_agents() == 2);
  CHECK(g.n_states() == 81);
  CHECK(g.n_actions(0) == 5);
  int absorbing = 0;
  for (int s = 0; s < g.n_states(); ++s) absorbing += g.is_absorbing(s);
  CHECK(absorbing == 9);
  for (int s = 0; s < g.n_states(); ++s)
    for (int j = 0; j < g.n_joint(); ++j) CHECK(g.reward(s, j) <= 0.0);
  auto opt_report = optimal_joint(g);
  CHECK(opt_report.J < 0.0);

  opt.asymmetric_roles = true;
  opt.n_agents = 3;
  opt.side = 2;
  auto a = make_grid_rendezvous(opt);
  CHECK(a.n_agents() == 3);
  CHECK(a.n_states() == 64);
}

TEST_CASE("target matching optimum") {
  TargetMatchingGame tm;
  for (int c = 0; c < tm.n_contexts(); ++c) {
    double a = tm.optimal_action(c);
    CHECK(tm.reward(c, a, a) == doctest::Approx(0.0));
    CHECK(tm.reward(c, a + 0.1, a) < 0.0);
  }
  auto dg = make_diff_game();
  CHECK(dg.reward(1.0, -1.0) == -1.0);
}

TEST_CASE("json round trip") {
  auto g = make_random_game(2, 3, {2, 3}, 0.8, 3);
  g.set_episode_limit(12);
  auto back = game_from_json(game_to_json(g));
  CHECK(back == g);
  auto doc = game_to_json(g);
  doc["surprise"] = 1;
  CHECK_THROWS_AS(game_from_json(doc), Error);
}

}
