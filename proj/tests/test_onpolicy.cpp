#include "doctest.h"
#include "harl/onpolicy.hpp"

using namespace harl;

namespace {

TrainConfig small_config(const std::string& algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  c.n_rollout_threads = 4;
  c.episode_length = 25;
  c.num_env_steps = 2000;
  c.hidden_sizes = {16};
  c.critic_hidden_sizes = {16};
  return c;
}

}  // namespace

TEST_SUITE("onpolicy") {

TEST_CASE("gae worked example") {
  auto adv = gae({1.0, 1.0}, {0.5, 0.5, 0.0}, 0.9, 0.95);
  REQUIRE(adv.size() == 2);
  CHECK(adv[0] == doctest::Approx(1.3775).epsilon(1e-12));
  CHECK(adv[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gae limits") {
  std::vector<double> r{0.3, -1.0, 2.0}, v{0.1, 0.4, -0.2, 0.7};
  auto td = gae(r, v, 0.9, 0.0);
  for (int t = 0; t < 3; ++t) CHECK(td[t] == doctest::Approx(r[t] + 0.9 * v[t + 1] - v[t]));
  auto mc = gae(r, {0.0, 0.0, 0.0, 0.0}, 0.9, 1.0);
  CHECK(mc[0] == doctest::Approx(0.3 - 0.9 + 0.81 * 2.0));
}

TEST_CASE("clip term") {
  CHECK(clip_term(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clip_term(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK(clip_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clip_term(0.5, 1.0, 0.2) == doctest::Approx(0.5));
}

TEST_CASE("conjugate gradient solves an SPD system") {
  Mat A(3, 3);
  A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  Vec g(3);
  g << 1, 2, 3;
  double res = 1.0;
  Vec x = conjugate_gradient([&](const Vec& v) { Vec out = A * v; return out; }, g, 10, 1e-12, &res);
  CHECK((A * x - g).norm() < 1e-10);
  CHECK(res < 1e-10);
}

TEST_CASE("scheme names") {
  for (auto s : {UpdateScheme::sequential_random, UpdateScheme::sequential_fixed,
                 UpdateScheme::simultaneous, UpdateScheme::shared})
    CHECK(scheme_from_name(scheme_name(s)) == s);
  CHECK_THROWS_AS(scheme_from_name("sideways"), Error);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  CHECK_THROWS_AS(train_config_from_json({{"clip_parm", 0.1}}), Error);
  CHECK_THROWS_AS(train_config_from_json({{"clip_param", -0.1}}), Error);
  auto c = train_config_from_json({{"algorithm", "hatrpo"}, {"kl_threshold", 0.01}});
  CHECK(c.algorithm == "hatrpo");
  CHECK(train_config_from_json(train_config_to_json(c)).kl_threshold == 0.01);
}

TEST_CASE("rollout batch shape and stored log-probs") {
  auto env = make_environment({{"name", "xor"}, {"n", 2}}, 0);
  OnPolicyTrainer tr(*env, small_config("happo"), 3);
  tr.round();
  const auto& b = tr.last_batch();
  CHECK(b.size() == 4 * 25);
  CHECK(b.obs.cols() == 100);
  // Stored log-probs refer to the actors before the update; recompute with a
  // fresh trainer that has not updated yet.
  OnPolicyTrainer fresh(*env, small_config("happo"), 3);
  Vec lp = fresh.actor_for(0).log_prob(b.obs, b.actions[0]);
  CHECK((lp - b.old_log_probs[0]).norm() < 1e-10);
}

TEST_CASE("compound ratio matches the product of agent ratios") {
  auto env = make_environment({{"name", "xor"}, {"n", 4}}, 0);
  for (const char* alg : {"happo", "haa2c", "hatrpo"}) {
    OnPolicyTrainer tr(*env, small_config(alg), 1);
    tr.round();
    CHECK(tr.last_m_error() < 1e-8);
    CHECK(tr.last_order().size() == 4);
  }
}

TEST_CASE("hatrpo accepted steps stay inside the trust region") {
  auto env = make_environment({{"name", "grid_rendezvous"}, {"side", 3}}, 0);
  auto c = small_config("hatrpo");
  c.num_env_steps = 1000;
  OnPolicyTrainer tr(*env, c, 2);
  auto res = tr.run();
  int accepted = 0;
  for (const auto& u : res.updates) {
    if (!u.accepted) continue;
    ++accepted;
    CHECK(u.kl_mean <= c.kl_threshold + 1e-12);
    CHECK(u.improvement >= c.accept_ratio * u.expected);
  }
  CHECK(accepted > 0);
}

TEST_CASE("training is deterministic per seed") {
  auto env = make_environment({{"name", "xor"}, {"n", 2}}, 0);
  for (auto scheme : {UpdateScheme::sequential_random, UpdateScheme::shared, UpdateScheme::simultaneous}) {
    auto c = small_config("happo");
    c.scheme = scheme;
    auto a = OnPolicyTrainer(*env, c, 5).run();
    auto b = OnPolicyTrainer(*env, c, 5).run();
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t k = 0; k < a.curve.size(); ++k)
      CHECK(curve_row_csv(a.curve[k]) == curve_row_csv(b.curve[k]));
    CHECK(a.exact_J == b.exact_J);
  }
}

TEST_CASE("shared scheme keeps one actor") {
  auto env = make_environment({{"name", "xor"}, {"n", 4}}, 0);
  auto c = small_config("happo");
  c.scheme = UpdateScheme::shared;
  OnPolicyTrainer tr(*env, c, 0);
  CHECK(tr.actors().size() == 1);
  auto game = make_tabular_game({{"name", "xor"}, {"n", 4}});
  auto pol = tr.tabular_policy(*game);
  CHECK(pol.size() == 4);
  CHECK(pol[0] == pol[3]);
}

TEST_CASE("gaussian actors on a continuous env") {
  auto env = make_environment({{"name", "target_matching"}}, 0);
  auto c = small_config("happo");
  c.num_env_steps = 500;
  auto res = OnPolicyTrainer(*env, c, 0).run();
  CHECK(std::isfinite(res.final_return_mean));
  CHECK_FALSE(res.actors.front().categorical());
}

TEST_CASE("csv header") {
  CHECK(curve_header() == "round,env_steps,return_mean,return_std,agent,kl_mean,surrogate,clip_frac");
}

}
