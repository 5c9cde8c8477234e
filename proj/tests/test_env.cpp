#include "doctest.h"
#include "harl/env.hpp"

using namespace harl;

TEST_SUITE("env") {

TEST_CASE("tabular env follows the game and truncates at the episode limit") {
  auto game = std::make_shared<CooperativeMarkovGame>(make_random_game(2, 3, {2, 2}, 0.9, 3));
  game->set_episode_limit(4);
  TabularEnv env(game, 7);
  env.reset();
  CHECK(env.obs().sum() == doctest::Approx(1.0));
  CHECK(env.obs()[env.state()] == 1.0);
  StepResult r;
  for (int t = 0; t < 4; ++t) {
    int s = env.state();
    std::vector<double> a{1.0, 0.0};
    r = env.step(a);
    CHECK(r.reward == game->reward(s, game->joint_index(std::vector<int>{1, 0})));
  }
  CHECK(r.truncated);
  CHECK_FALSE(r.terminal);
}

TEST_CASE("absorbing grid state terminates") {
  GridRendezvousOptions opt;
  auto game = std::make_shared<CooperativeMarkovGame>(make_grid_rendezvous(opt));
  TabularEnv env(game, 1);
  env.reset();
  bool terminal = false;
  Rng rng(2);
  for (int t = 0; t < 2000 && !terminal; ++t) {
    std::vector<double> a{double(rng() % 5), double(rng() % 5)};
    auto r = env.step(a);
    terminal = r.terminal;
    if (r.terminal || r.truncated) {
      if (r.terminal) CHECK(r.reward <= 0.0);
      env.reset();
    }
  }
  CHECK(terminal);
}

TEST_CASE("clones with equal seeds agree") {
  auto env = make_environment({{"name", "random"}, {"n_agents", 2}, {"n_states", 4}, {"n_actions", {3, 3}}}, 0);
  auto a = env->clone(5), b = env->clone(5);
  a->reset();
  b->reset();
  for (int t = 0; t < 50; ++t) {
    std::vector<double> act{double(t % 3), double((t + 1) % 3)};
    auto ra = a->step(act), rb = b->step(act);
    CHECK(ra.reward == rb.reward);
    CHECK((a->obs() - b->obs()).norm() == 0.0);
    if (ra.terminal || ra.truncated) {
      a->reset();
      b->reset();
    }
  }
}

TEST_CASE("target matching env") {
  TargetMatchingEnv env(TargetMatchingGame{}, 3);
  env.reset();
  CHECK(env.obs_dim() == 5);
  CHECK(env.obs()[env.context()] == 1.0);
  CHECK(env.obs()[4] == 0.0);
  int c = env.context();
  double a = env.game().optimal_action(c);
  std::vector<double> act{a, a};
  auto r = env.step(act);
  CHECK(r.reward == doctest::Approx(0.0));
  Vec o = env.observation(1, 2);
  CHECK(o[1] == 1.0);
  CHECK(o[4] == doctest::Approx(2.0 / 5.0));
  std::vector<double> wild{5.0, 5.0};
  CHECK(std::isfinite(env.step(wild).reward));
}

TEST_CASE("factory rejects unknown names and keys") {
  CHECK_THROWS_AS(make_environment({{"name", "nope"}}, 0), Error);
  CHECK_THROWS_AS(make_environment({{"name", "xor"}, {"n", 4}, {"extra", 1}}, 0), Error);
  CHECK(make_tabular_game({{"name", "target_matching"}}) == nullptr);
  auto xor4 = make_tabular_game({{"name", "xor"}, {"n", 4}});
  REQUIRE(xor4);
  CHECK(xor4->n_agents() == 4);
  auto dg = make_environment({{"name", "diffgame"}}, 0);
  std::vector<double> act{1.0, -1.0};
  dg->reset();
  CHECK(dg->step(act).reward == -1.0);
}

}
