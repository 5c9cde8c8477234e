#include <set>

#include "doctest.h"
#include "harl/hatrl.hpp"
#include "json.hpp"

using namespace harl;

TEST_SUITE("hatrl") {

TEST_CASE("random permutations cover Sym(3)") {
  PermutationSampler sampler(3, 42);
  std::set<std::vector<int>> seen;
  for (int k = 0; k < 1000; ++k) seen.insert(sampler.next());
  CHECK(seen.size() == 6);
  PermutationSampler fixed(std::vector<int>{2, 0, 1});
  CHECK_FALSE(fixed.random());
  CHECK(fixed.next() == std::vector<int>{2, 0, 1});
}

TEST_CASE("kl prox argmax beats random candidates") {
  Rng rng(3);
  std::vector<double> p{0.2, 0.5, 0.3}, g{0.4, -0.1, 0.9};
  for (double c : {0.05, 0.5, 3.0}) {
    auto q = kl_prox_argmax(p, g, c);
    auto value = [&](const std::vector<double>& x) {
      double v = 0.0;
      for (int a = 0; a < 3; ++a) v += x[a] * g[a];
      return v - c * kl_divergence(p, x);
    };
    double best = value(q);
    for (int k = 0; k < 2000; ++k) {
      std::vector<double> x(3);
      double t = 0.0;
      for (auto& xi : x) t += xi = uniform01(rng) + 1e-3;
      for (auto& xi : x) xi /= t;
      CHECK(value(x) <= best + 1e-12);
    }
  }
  auto vertex = kl_prox_argmax(p, g, 0.0);
  CHECK(vertex == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("agent step keeps the penalized objective nonnegative") {
  auto g = make_random_game(2, 3, {3, 2}, 0.8, 13);
  Rng rng(6);
  auto pi = random_joint_policy(g, rng);
  auto prof = evaluate(g, pi);
  TrustRegionConfig cfg;
  for (int agent = 0; agent < 2; ++agent) {
    auto res = agent_tr_step(g, pi, prof, {}, pi, agent, cfg);
    CHECK(res.objective >= -1e-12);
    CHECK_NOTHROW(res.policy.validate());
  }
  CHECK(penalty_coefficient(g, prof) > 0.0);
}

TEST_CASE("sequential iteration is monotone") {
  auto g = make_random_game(3, 4, {2, 3, 2}, 0.9, 17);
  Rng rng(1);
  TrustRegionConfig cfg;
  cfg.max_outer_iters = 30;
  PermutationSampler sampler(3, 5);
  auto res = policy_iteration(g, random_joint_policy(g, rng), sampler, cfg);
  REQUIRE(res.J.size() == 31);
  for (std::size_t k = 1; k < res.J.size(); ++k) CHECK(res.J[k] >= res.J[k - 1] - 1e-9);
  auto log = nlohmann::json::parse(iteration_log_json(res));
  CHECK(log.is_object());
}

TEST_CASE("matrix game: sequential reaches the optimum, simultaneous collapses") {
  auto g = make_matrix_game_example2();
  JointPolicy pi{TabularPolicy(1, 2, {0.7, 0.3}), TabularPolicy(1, 2, {0.7, 0.3})};
  TrustRegionConfig cfg;
  cfg.max_outer_iters = 1;
  cfg.penalty_override = 0.0;
  auto sim = simultaneous_iteration(g, pi, cfg);
  CHECK(sim.J.back() == doctest::Approx(-1.0).epsilon(1e-12));
  PermutationSampler sampler(std::vector<int>{0, 1});
  auto seq = policy_iteration(g, pi, sampler, cfg);
  CHECK(seq.J.back() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("config validation") {
  TrustRegionConfig cfg;
  cfg.inner_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

}
