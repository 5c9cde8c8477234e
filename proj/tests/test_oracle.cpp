#include <numeric>

#include "doctest.h"
#include "harl/oracle.hpp"

using namespace harl;

TEST_SUITE("oracle") {

TEST_CASE("evaluate on the matrix game") {
  auto g = make_matrix_game_example2();
  JointPolicy pi{TabularPolicy(1, 2, {0.7, 0.3}), TabularPolicy(1, 2, {0.7, 0.3})};
  auto prof = evaluate(g, pi);
  CHECK(prof.J == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(prof.q(0, 3) == -1.0);
  int agent[1] = {0};
  int act[1] = {1};
  // Agent 0 plays 1 while agent 1 keeps playing 0 with probability 0.7.
  CHECK(multiagent_q(g, pi, prof, 0, agent, act) == doctest::Approx(0.7 * 2.0 + 0.3 * -1.0));
}

TEST_CASE("Bellman consistency and visitation mass") {
  auto g = make_random_game(2, 4, {3, 2}, 0.9, 5);
  Rng rng(2);
  auto pi = random_joint_policy(g, rng);
  auto prof = evaluate(g, pi);
  std::vector<double> jp;
  for (int s = 0; s < g.n_states(); ++s) {
    joint_probs(g, pi, s, jp);
    double v = 0.0;
    for (int j = 0; j < g.n_joint(); ++j) {
      double q = g.reward(s, j);
      auto nx = g.next_states(s, j);
      auto pr = g.next_probs(s, j);
      for (std::size_t k = 0; k < nx.size(); ++k) q += g.gamma() * pr[k] * prof.V[nx[k]];
      CHECK(prof.q(s, j) == doctest::Approx(q).epsilon(1e-10));
      v += jp[j] * q;
    }
    CHECK(prof.V[s] == doctest::Approx(v).epsilon(1e-10));
  }
  double mass = std::accumulate(prof.rho.begin(), prof.rho.end(), 0.0);
  CHECK(mass == doctest::Approx(1.0 / (1.0 - g.gamma())).epsilon(1e-10));
}

TEST_CASE("multi-agent Q endpoints") {
  auto g = make_random_game(3, 3, {2, 2, 3}, 0.8, 9);
  Rng rng(4);
  auto pi = random_joint_policy(g, rng);
  auto prof = evaluate(g, pi);
  for (int s = 0; s < g.n_states(); ++s) {
    CHECK(multiagent_q(g, pi, prof, s, {}, {}) == doctest::Approx(prof.V[s]).epsilon(1e-12));
    std::vector<int> all{0, 1, 2};
    for (int j = 0; j < g.n_joint(); ++j) {
      auto a = g.decode_joint(j);
      CHECK(multiagent_q(g, pi, prof, s, all, a) == doctest::Approx(prof.q(s, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-agent advantage decomposition") {
  auto g = make_random_game(2, 2, {3, 2}, 0.7, 11);
  Rng rng(1);
  auto pi = random_joint_policy(g, rng);
  auto prof = evaluate(g, pi);
  std::vector<int> first{1}, second{0};
  for (int s = 0; s < g.n_states(); ++s)
    for (int j = 0; j < g.n_joint(); ++j) {
      auto a = g.decode_joint(j);
      std::vector<int> a1{a[1]}, a0{a[0]};
      double lhs = prof.advantage(s, j);
      double rhs = multiagent_adv(g, pi, prof, s, {}, {}, first, a1) +
                   multiagent_adv(g, pi, prof, s, first, a1, second, a0);
      CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("best response gaps") {
  auto g = make_matrix_game_example2();
  auto opt = optimal_joint(g);
  CHECK(opt.J == doctest::Approx(2.0));
  auto pi = deterministic_joint_policy(g, opt.joint_action);
  auto br = best_response_gap(g, pi);
  CHECK(br.gaps[0] < 1e-12);
  CHECK(br.gaps[1] < 1e-12);

  JointPolicy bad{TabularPolicy::deterministic(1, 2, {1}), TabularPolicy::deterministic(1, 2, {1})};
  auto br2 = best_response_gap(g, bad);
  CHECK(br2.J == -1.0);
  CHECK(br2.gaps[0] == doctest::Approx(3.0));
}

TEST_CASE("estimator identity at a state") {
  auto g = make_random_game(3, 2, {2, 2, 2}, 0.6, 21);
  Rng rng(8);
  auto pi = random_joint_policy(g, rng);
  auto bar = random_joint_policy(g, rng);
  auto hat = TabularPolicy::random(g.n_states(), 2, rng);
  auto prof = evaluate(g, pi);
  std::vector<int> prefix{2, 0};
  for (int s = 0; s < g.n_states(); ++s) {
    double l = estimator_identity_lhs(g, pi, prof, s, prefix, bar, 1, hat);
    double r = estimator_identity_rhs(g, pi, prof, s, prefix, bar, 1, hat);
    CHECK(std::abs(l - r) < 1e-10);
  }
}

TEST_CASE("policy validation") {
  CHECK_THROWS_AS(TabularPolicy(1, 2, {0.6, 0.6}).validate(), Error);
  CHECK_THROWS_AS(TabularPolicy(1, 2, {1.2, -0.2}).validate(), Error);
  auto g = make_matrix_game_example2();
  JointPolicy wrong{TabularPolicy(1, 3)};
  CHECK_THROWS_AS(check_policy(g, wrong), Error);
}

}
