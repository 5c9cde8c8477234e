#include "doctest.h"
#include "harl/offpolicy.hpp"

using namespace harl;

namespace {

// One agent, one step: r = -(a - 0.3)^2.
class OneAgentEnv : public Environment {
 public:
  std::string name() const override { return "one_agent"; }
  int n_agents() const override { return 1; }
  int obs_dim() const override { return 1; }
  bool discrete() const override { return false; }
  int n_actions(int) const override { return 0; }
  int action_dim(int) const override { return 1; }
  double gamma() const override { return 0.0; }
  void reset() override { steps_ = 0; }
  StepResult step(std::span<const double> a) override {
    ++steps_;
    return {-(a[0] - 0.3) * (a[0] - 0.3), true, false};
  }
  const Vec& obs() const override { return obs_; }
  int steps() const override { return steps_; }
  std::unique_ptr<Environment> clone(std::uint64_t) const override {
    return std::make_unique<OneAgentEnv>();
  }

 private:
  int steps_ = 0;
  Vec obs_ = Vec::Ones(1);
};

OffPolicyConfig small_config(const std::string& algorithm) {
  OffPolicyConfig c;
  c.algorithm = algorithm;
  c.n_rollout_threads = 4;
  c.num_env_steps = 2000;
  c.warmup_steps = 200;
  c.buffer_size = 5000;
  c.batch_size = 32;
  c.train_interval = 5;
  c.update_per_train = 1.0;
  c.hidden_sizes = {16};
  c.critic_hidden_sizes = {16};
  c.dueling_v_hidden_sizes = {16};
  c.dueling_a_hidden_sizes = {16};
  c.log_interval = 500;
  return c;
}

Vec flat(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

}  // namespace

TEST_SUITE("offpolicy") {

TEST_CASE("polyak update") {
  Vec target = Vec::Zero(3), source = Vec::Ones(3);
  polyak_update(target, source, 0.005);
  CHECK(target[0] == 0.005);
  Vec t2 = flat({0.2, -1.0}), s2 = flat({1.5, 4.0});
  Vec expect = 0.1 * s2 + 0.9 * t2;
  polyak_update(t2, s2, 0.1);
  CHECK((t2 - expect).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("twin target and smoothing clip") {
  CHECK(twin_target(1.0, 0.9, 3.0, 2.0) == doctest::Approx(2.8));
  CHECK(twin_target(1.0, 0.0, 3.0, 2.0) == 1.0);
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    double n = smoothing_noise(2.0, 0.5, rng);
    CHECK(std::abs(n) <= 0.5);
    double q1 = normal01(rng), q2 = normal01(rng);
    CHECK(twin_target(0.3, 0.9, q1, q2) <= 0.3 + 0.9 * q1);
    CHECK(twin_target(0.3, 0.9, q1, q2) <= 0.3 + 0.9 * q2);
  }
}

TEST_CASE("n-step returns match brute force") {
  const double g = 0.9;
  std::vector<double> r{1.0, 2.0, 4.0};
  std::vector<Vec> s{flat({0}), flat({1}), flat({2}), flat({3})};
  for (bool terminal : {true, false}) {
    for (int n : {1, 2, 3, 5}) {
      NStepAccumulator acc(n, g);
      std::vector<Transition> out;
      for (int t = 0; t < 3; ++t) {
        auto got = acc.add(s[t], flat({double(t)}), r[t], s[t + 1], t == 2 && terminal,
                           t == 2 && !terminal);
        out.insert(out.end(), got.begin(), got.end());
      }
      REQUIRE(out.size() == 3);
      for (int t = 0; t < 3; ++t) {
        const auto& tr = out[t];
        CHECK(tr.obs[0] == t);
        int end = std::min(t + n, 3);
        double ret = 0.0, disc = 1.0;
        for (int k = t; k < end; ++k, disc *= g) ret += disc * r[k];
        CHECK(tr.reward == doctest::Approx(ret).epsilon(1e-15));
        CHECK(tr.next_obs[0] == end);
        double want = (end == 3 && terminal) ? 0.0 : disc;
        CHECK(tr.discount == doctest::Approx(want).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("replay buffer wraps around") {
  ReplayBuffer buf(3, 1, 1);
  for (int k = 0; k < 5; ++k) {
    Transition t{flat({double(k)}), flat({0.0}), double(k), flat({0.0}), 1.0};
    buf.push(t);
  }
  CHECK(buf.size() == 3);
  double total = 0.0;
  for (long i = 0; i < 3; ++i) total += buf.at(i).reward;
  CHECK(total == 2.0 + 3.0 + 4.0);
  Rng rng(0);
  auto b = buf.sample(100, rng);
  CHECK(b.rewards.minCoeff() >= 2.0);
}

TEST_CASE("sequential critic input uses new actions for the prefix only") {
  TargetMatchingEnv env(TargetMatchingGame{}, 0);
  auto c = small_config("haddpg");
  OffPolicyTrainer tr(env, c, 3);
  auto old = tr.actors();
  // Move agent 0 so that its new and old actions differ.
  tr.mutable_actors()[0].net().params().array() += 0.5;
  tr.mutable_actors()[1].net().params().array() -= 0.5;
  Mat obs = env.observation(2, 1);
  Mat new0 = tr.actors()[0].act(obs), old0 = old[0].act(obs);
  Mat new1 = tr.actors()[1].act(obs), old1 = old[1].act(obs);
  REQUIRE(std::abs(new0(0, 0) - old0(0, 0)) > 1e-3);
  const int od = env.obs_dim();
  // Order (0, 1): agent 1 updates second and sees agent 0's new action.
  Mat in = tr.actor_critic_input(obs, {0, 1}, 1, old);
  CHECK(in(od, 0) == new0(0, 0));
  // Order (1, 0): agent 1 updates first; agent 0 still holds its old action.
  in = tr.actor_critic_input(obs, {1, 0}, 0, old);
  CHECK(in(od, 0) == old0(0, 0));
  CHECK(in(od + 1, 0) == new1(0, 0));

  // MADDPG always sees the others' old actions.
  OffPolicyTrainer ma(env, small_config("maddpg"), 3);
  auto ma_old = ma.actors();
  ma.mutable_actors()[0].net().params().array() += 0.5;
  in = ma.actor_critic_input(obs, {0, 1}, 1, ma_old);
  CHECK(in(od, 0) == ma_old[0].act(obs)(0, 0));
}

TEST_CASE("hand-built critic: second agent ascends toward the first agent's new action") {
  DiffGameEnv env(0);
  auto c = small_config("haddpg");
  c.hidden_sizes = {};
  c.critic_hidden_sizes = {2};
  OffPolicyTrainer tr(env, c, 1);
  // Q(s, a1, a2) = -relu(a1 - a2) - relu(a2 - a1) = -|a1 - a2|.
  Mlp& q = tr.mutable_critics()[0];
  q.params().setZero();
  q.weight(0) << 0.0, 1.0, -1.0, 0.0, -1.0, 1.0;
  q.weight(1) << -1.0, -1.0;
  for (auto& actor : tr.mutable_actors()) actor.net().params().setZero();
  auto old = tr.actors();
  old[0].net().params()[1] = -1.0;  // old a1 = tanh(-1)
  tr.mutable_actors()[0].net().params()[1] = 1.0;  // new a1 = tanh(1)
  Mat obs = Mat::Zero(1, 1);
  Mlp::Cache cache;
  Vec scratch = Vec::Zero(q.n_params());
  Mat in = tr.actor_critic_input(obs, {0, 1}, 1, old);
  CHECK(in(1, 0) == doctest::Approx(std::tanh(1.0)));
  q.forward(in, &cache);
  Mat dq = q.backward(cache, Mat::Ones(1, 1), scratch, true);
  CHECK(dq(2, 0) > 0.0);
  // Against the old action the same step would push agent 2 down.
  in(1, 0) = old[0].act(obs)(0, 0);
  q.forward(in, &cache);
  dq = q.backward(cache, Mat::Ones(1, 1), scratch, true);
  CHECK(dq(2, 0) < 0.0);
}

TEST_CASE("policy delay holds the actors on odd rounds") {
  TargetMatchingEnv env(TargetMatchingGame{}, 0);
  auto c = small_config("hatd3");
  c.policy_delay = 2;
  OffPolicyTrainer tr(env, c, 4);
  for (int k = 0; k < 20; ++k) tr.collect_step();
  Vec before = tr.actors()[0].net().params();
  auto st1 = tr.update();
  CHECK_FALSE(st1.actors_updated);
  CHECK(tr.actors()[0].net().params() == before);
  auto st2 = tr.update();
  CHECK(st2.actors_updated);
  CHECK(tr.actors()[0].net().params() != before);
  CHECK(tr.critics().size() == 2);
}

TEST_CASE("epsilon-greedy picks the argmax with probability 1 - eps + eps / |A|") {
  auto env = make_environment({{"name", "example2"}}, 0);
  auto c = small_config("had3qn");
  c.warmup_steps = 0;
  c.epsilon = 0.2;
  c.n_rollout_threads = 10;
  c.buffer_size = 20000;
  OffPolicyTrainer tr(*env, c, 2);
  for (int k = 0; k < 1000; ++k) tr.collect_step();
  Mat greedy = tr.greedy_actions(Mat::Ones(1, 1));
  std::vector<int> hits(2, 0);
  const long n = tr.buffer().size();
  for (long i = 0; i < n; ++i) {
    auto t = tr.buffer().at(i);
    for (int a = 0; a < 2; ++a) hits[a] += t.action[a] == greedy(a, 0);
  }
  for (int a = 0; a < 2; ++a)
    CHECK(double(hits[a]) / double(n) == doctest::Approx(0.9).epsilon(0.02));
}

TEST_CASE("had3qn solves the matrix game") {
  auto env = make_environment({{"name", "example2"}}, 0);
  auto c = small_config("had3qn");
  c.num_env_steps = 6000;
  c.lr = 1e-3;
  c.critic_lr = 1e-3;
  for (std::uint64_t seed : {0, 1, 2}) {
    OffPolicyTrainer tr(*env, c, seed);
    auto res = tr.run();
    REQUIRE(res.has_exact);
    CHECK(res.exact_return == doctest::Approx(2.0));
    Mat g = tr.greedy_actions(Mat::Ones(1, 1));
    CHECK(g(0, 0) != g(1, 0));
  }
}

TEST_CASE("maddpg matches haddpg with one agent") {
  OneAgentEnv env;
  auto a = small_config("haddpg");
  auto b = small_config("maddpg");
  OffPolicyTrainer ta(env, a, 7), tb(env, b, 7);
  auto ra = ta.run();
  auto rb = tb.run();
  CHECK(ta.actors()[0].net().params() == tb.actors()[0].net().params());
  CHECK(ta.critics()[0].params() == tb.critics()[0].params());
  CHECK(ra.final_return_mean == rb.final_return_mean);
}

TEST_CASE("algorithm and action space must agree") {
  auto tab = make_environment({{"name", "example2"}}, 0);
  CHECK_THROWS_AS(OffPolicyTrainer(*tab, small_config("haddpg"), 0), Error);
  TargetMatchingEnv cont(TargetMatchingGame{}, 0);
  CHECK_THROWS_AS(OffPolicyTrainer(cont, small_config("had3qn"), 0), Error);
  CHECK_THROWS_AS(offpolicy_config_from_json({{"polyak", 2.0}}), Error);
  CHECK_THROWS_AS(offpolicy_config_from_json({{"bufer_size", 10}}), Error);
  CHECK(is_offpolicy_algorithm("hatd3"));
  CHECK_FALSE(is_offpolicy_algorithm("happo"));
}

TEST_CASE("runs are deterministic and log the extended header") {
  TargetMatchingEnv env(TargetMatchingGame{}, 0);
  auto c = small_config("hatd3");
  auto a = OffPolicyTrainer(env, c, 11).run();
  auto b = OffPolicyTrainer(env, c, 11).run();
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k)
    CHECK(off_curve_row_csv(a.curve[k]) == off_curve_row_csv(b.curve[k]));
  CHECK(a.exact_return == b.exact_return);
  CHECK(off_curve_header() ==
        "round,env_steps,return_mean,return_std,agent,kl_mean,surrogate,clip_frac,critic_loss,q_mean");
}

TEST_CASE("sequential learner does at least as well as simultaneous on the bilinear game") {
  DiffGameEnv env(0);
  auto seq = small_config("haddpg");
  seq.num_env_steps = 1200;
  seq.warmup_steps = 400;
  auto sim = seq;
  sim.algorithm = "maddpg";
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    OffPolicyTrainer a(env, seq, seed), b(env, sim, seed);
    a.run();
    b.run();
    Mat obs = Mat::Zero(1, 1);
    Mat xa = a.greedy_actions(obs), xb = b.greedy_actions(obs);
    wins += xa(0, 0) * xa(1, 0) >= xb(0, 0) * xb(1, 0) - 1e-12;
  }
  CHECK(wins >= 8);
}

}
