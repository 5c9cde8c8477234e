// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "harl/experiments.hpp"
#include "harl/offpolicy.hpp"
#include "harl/onpolicy.hpp"
#include "harl/props.hpp"

using namespace harl;
using nlohmann::json;

namespace {

// Pinned thresholds.
constexpr std::uint64_t kSeed = 0;
constexpr double kDecompositionSeconds = 30.0;
constexpr int kSeeds = 10;
constexpr int kMinSeedPasses = 8;
constexpr double kXorSharedMax = 0.2;
constexpr double kXorHeteroMin = 0.9;
constexpr long kXorSteps = 200000;
constexpr double kXorSecondsPerRun = 300.0;
constexpr double kGridRatioMax = 1.05;  // J* < 0, so this bounds J / J* from above
constexpr long kGridStepCap = 500000;
constexpr double kGridSecondsPerRun = 600.0;
constexpr long kTargetSteps = 200000;
constexpr double kTargetTolerance = 0.05;  // exact return within 0.05 of the optimum 0
constexpr int kTd3MinWins = 7;
constexpr double kCgResidualMax = 1e-8;
constexpr double kKlSlack = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Verdict from_suite(const std::string& name) {
  auto v = run_suite(name, kSeed);
  return {v.passed, name + " " + fmt("%.2fs", v.seconds)};
}

// ---- 1-4, 8, 9: property suites ----

Verdict c1() {
  auto v = run_suite("decomposition", kSeed);
  bool ok = v.passed && v.seconds < kDecompositionSeconds;
  return {ok, "games=" + v.details.value("games", json(0)).dump() +
                  " worst_err=" + v.details.value("worst_error", json(0.0)).dump() +
                  fmt(" time=%.2fs", v.seconds)};
}

Verdict c2() { return from_suite("zero_mean"); }
Verdict c3() { return from_suite("estimator"); }
Verdict c4() { return from_suite("monotonicity"); }

Verdict c8() {
  Verdict out{true, ""};
  for (const char* s : {"hadf", "improvement", "haml"}) {
    auto v = run_suite(s, kSeed);
    out.passed = out.passed && v.passed;
    out.detail += std::string(s) + (v.passed ? "=ok " : "=FAIL ");
  }
  return out;
}

Verdict c9() { return from_suite("gradients"); }

// ---- 5: matrix game ----

Verdict c5() {
  auto r = cmd_repro("example2");
  return {r.at("passed").get<bool>(),
          fmt("J_sim=%g", r.at("J_simultaneous").get<double>()) +
              fmt(" J_min=%g", r.at("J_min").get<double>()) +
              fmt(" J_seq=%g", r.at("J_sequential").get<double>())};
}

// ---- 6: xor team game ----

TrainConfig xor_config(UpdateScheme scheme) {
  TrainConfig c;
  c.algorithm = "happo";
  c.scheme = scheme;
  c.hidden_sizes = {};
  c.critic_hidden_sizes = {};
  c.n_rollout_threads = 10;
  c.episode_length = 50;
  c.num_env_steps = kXorSteps;
  c.lr = 0.05;
  c.critic_lr = 0.05;
  return c;
}

Verdict c6() {
  auto analytic = cmd_repro("xor", {2, 4, 6});
  bool analytic_ok = analytic.at("passed").get<bool>();
  auto env = make_environment({{"name", "xor"}, {"n", 4}}, 0);
  int shared_ok = 0, hetero_ok = 0;
  double worst_time = 0.0;
  std::string js, jh;
  for (int s = 0; s < kSeeds; ++s) {
    auto t0 = Clock::now();
    auto sh = OnPolicyTrainer(*env, xor_config(UpdateScheme::shared), s).run();
    worst_time = std::max(worst_time, seconds_since(t0));
    t0 = Clock::now();
    auto he = OnPolicyTrainer(*env, xor_config(UpdateScheme::sequential_random), s).run();
    worst_time = std::max(worst_time, seconds_since(t0));
    shared_ok += sh.exact_J <= kXorSharedMax;
    hetero_ok += he.exact_J > kXorHeteroMin;
    js += fmt(" %.3f", sh.exact_J);
    jh += fmt(" %.3f", he.exact_J);
  }
  bool ok = analytic_ok && shared_ok >= kMinSeedPasses && hetero_ok >= kMinSeedPasses &&
            worst_time < kXorSecondsPerRun;
  return {ok, std::string("analytic=") + (analytic_ok ? "ok" : "FAIL") +
                  " shared<=0.2:" + std::to_string(shared_ok) + "/10 hetero>0.9:" +
                  std::to_string(hetero_ok) + "/10" + fmt(" max_run=%.1fs", worst_time) +
                  "\n    shared J:" + js + "\n    hetero J:" + jh};
}

// ---- 7: bilinear game ----

Verdict c7() {
  auto r = cmd_repro("diffgame");
  return {r.at("passed").get<bool>(),
          "start=(1,-1) lr=3" + fmt(" dr_sim=%g", r.at("delta_simultaneous").get<double>()) +
              fmt(" dr_seq=%g", r.at("delta_sequential").get<double>())};
}

// ---- 10: HATRPO step contract ----

Verdict c10() {
  auto env = make_environment({{"name", "grid_rendezvous"}, {"side", 3}}, 0);
  TrainConfig c;
  c.algorithm = "hatrpo";
  c.hidden_sizes = {};
  c.critic_hidden_sizes = {};
  c.n_rollout_threads = 10;
  c.episode_length = 50;
  c.num_env_steps = 100000;
  c.critic_lr = 0.05;
  c.kl_threshold = 0.02;
  c.cg_iters = 100;
  c.cg_tol = 1e-10;
  int accepted = 0, total = 0, bad_kl = 0, bad_improve = 0, bad_cg = 0;
  double worst_residual = 0.0, worst_kl = 0.0;
  for (int s = 0; s < 3; ++s) {
    auto res = OnPolicyTrainer(*env, c, s).run();
    for (const auto& u : res.updates) {
      ++total;
      worst_residual = std::max(worst_residual, u.cg_residual);
      bad_cg += !(u.cg_residual < kCgResidualMax);
      if (!u.accepted) continue;
      ++accepted;
      worst_kl = std::max(worst_kl, u.kl_mean);
      bad_kl += u.kl_mean > c.kl_threshold + kKlSlack;
      bad_improve += u.improvement < c.accept_ratio * u.expected;
    }
  }
  bool ok = accepted > 0 && bad_kl == 0 && bad_improve == 0 && bad_cg == 0;
  return {ok, "accepted=" + std::to_string(accepted) + "/" + std::to_string(total) +
                  fmt(" max_kl=%.4g", worst_kl) + fmt(" max_cg_residual=%.3g", worst_residual) +
                  " kl_violations=" + std::to_string(bad_kl) +
                  " improvement_violations=" + std::to_string(bad_improve)};
}

// ---- 11: sample-based end-to-end ----

TrainConfig grid_onpolicy(const std::string& algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  c.hidden_sizes = {};
  c.critic_hidden_sizes = {};
  c.n_rollout_threads = 10;
  c.episode_length = 50;
  c.lr = 0.05;
  c.critic_lr = 0.05;
  c.num_env_steps = 400000;
  if (algorithm == "hatrpo") {
    c.kl_threshold = 0.02;
    c.cg_iters = 100;
    c.cg_tol = 1e-10;
    c.num_env_steps = 300000;
  }
  return c;
}

OffPolicyConfig grid_d3qn() {
  OffPolicyConfig c;
  c.algorithm = "had3qn";
  c.n_rollout_threads = 10;
  c.num_env_steps = 200000;
  c.warmup_steps = 5000;
  c.batch_size = 128;
  c.train_interval = 10;
  c.update_per_train = 0.5;
  c.lr = 1e-3;
  c.critic_lr = 1e-3;
  c.dueling_v_hidden_sizes = {64};
  c.dueling_a_hidden_sizes = {64};
  c.critic_hidden_sizes = {64};
  c.log_interval = 50000;
  return c;
}

OffPolicyConfig target_config(const std::string& algorithm) {
  OffPolicyConfig c;
  c.algorithm = algorithm;
  c.n_rollout_threads = 10;
  c.num_env_steps = kTargetSteps;
  c.warmup_steps = 5000;
  c.batch_size = 128;
  c.train_interval = 10;
  c.update_per_train = 0.5;
  c.hidden_sizes = {64, 64};
  c.critic_hidden_sizes = {64, 64};
  c.log_interval = 50000;
  return c;
}

Verdict c11() {
  const json grid_doc{{"name", "grid_rendezvous"}, {"side", 3}, {"n_agents", 2}};
  auto game = make_tabular_game(grid_doc);
  const double j_star = optimal_joint(*game).J;
  auto env = make_environment(grid_doc, 0);
  Verdict out{true, fmt("J*=%.5f", j_star)};
  double worst_time = 0.0;

  auto grid_line = [&](const std::string& name, long steps,
                       const std::function<double(int)>& run_seed) {
    int ok = 0;
    std::string ratios;
    for (int s = 0; s < kSeeds; ++s) {
      auto t0 = Clock::now();
      double j = run_seed(s);
      worst_time = std::max(worst_time, seconds_since(t0));
      double ratio = j / j_star;
      ok += ratio <= kGridRatioMax;
      ratios += fmt(" %.4f", ratio);
    }
    bool pass = ok >= kMinSeedPasses && steps <= kGridStepCap;
    out.passed = out.passed && pass;
    out.detail += "\n    " + name + " " + std::to_string(ok) + "/10 within 95% (" +
                  std::to_string(steps) + " steps) J/J*:" + ratios;
  };

  for (const char* alg : {"happo", "hatrpo", "haa2c"}) {
    auto c = grid_onpolicy(alg);
    grid_line(alg, c.num_env_steps, [&](int s) { return OnPolicyTrainer(*env, c, s).run().exact_J; });
  }
  auto dq = grid_d3qn();
  grid_line("had3qn", dq.num_env_steps,
            [&](int s) { return OffPolicyTrainer(*env, dq, s).run().exact_return; });

  TargetMatchingEnv tm(TargetMatchingGame{}, 0);
  const double tm_opt = tm.game().optimal_return();
  std::vector<double> ddpg, td3;
  for (const char* alg : {"haddpg", "hatd3"}) {
    auto c = target_config(alg);
    int ok = 0;
    std::string rets;
    for (int s = 0; s < kSeeds; ++s) {
      auto t0 = Clock::now();
      double r = OffPolicyTrainer(tm, c, s).run().exact_return;
      worst_time = std::max(worst_time, seconds_since(t0));
      ok += r >= tm_opt - kTargetTolerance;
      (std::string(alg) == "haddpg" ? ddpg : td3).push_back(r);
      rets += fmt(" %.4f", r);
    }
    bool pass = ok >= kMinSeedPasses;
    out.passed = out.passed && pass;
    out.detail += "\n    " + std::string(alg) + " " + std::to_string(ok) +
                  "/10 within 0.05 of optimum, exact return:" + rets;
  }
  int wins = 0;
  for (int s = 0; s < kSeeds; ++s) wins += td3[s] >= ddpg[s];
  out.passed = out.passed && wins >= kTd3MinWins && worst_time < kGridSecondsPerRun;
  out.detail += "\n    hatd3 >= haddpg on " + std::to_string(wins) + "/10 paired seeds" +
                fmt("; slowest run %.1fs", worst_time);
  return out;
}

// ---- 12: update-scheme ablation ----

Verdict c12() {
  const json doc{{"name", "grid_rendezvous"}, {"side", 2}, {"n_agents", 3}, {"asymmetric_roles", true}};
  auto env = make_environment(doc, 0);
  double mean[3] = {0, 0, 0};
  const UpdateScheme schemes[3] = {UpdateScheme::sequential_random, UpdateScheme::sequential_fixed,
                                   UpdateScheme::shared};
  for (int k = 0; k < 3; ++k) {
    TrainConfig c;
    c.algorithm = "happo";
    c.scheme = schemes[k];
    c.hidden_sizes = {};
    c.critic_hidden_sizes = {};
    c.n_rollout_threads = 10;
    c.episode_length = 50;
    c.num_env_steps = 200000;
    c.lr = 0.05;
    c.critic_lr = 0.05;
    for (int s = 0; s < kSeeds; ++s) mean[k] += OnPolicyTrainer(*env, c, s).run().greedy_J / kSeeds;
  }
  bool ok = mean[0] >= mean[1] && mean[1] >= mean[2];
  return {ok, fmt("greedy J: random=%.5f", mean[0]) + fmt(" fixed=%.5f", mean[1]) +
                  fmt(" shared=%.5f", mean[2])};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"advantage decomposition", c1},
      {"per-agent advantage has zero mean", c2},
      {"joint-advantage estimator identity", c3},
      {"exact sequential iteration is monotone and reaches NE", c4},
      {"matrix game: simultaneous -1, sequential 2", c5},
      {"xor team game: shared vs heterogeneous", c6},
      {"bilinear game: one simultaneous vs sequential round", c7},
      {"mirror-learning drift axioms, improvement and convergence", c8},
      {"gradient and Fisher-vector checks", c9},
      {"HATRPO accepted-step contract", c10},
      {"sample-based learners reach the optimum", c11},
      {"update-scheme ablation ordering", c12},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.passed;
    std::printf("%s %2d %s [%.1fs] %s\n", v.passed ? "PASS" : "FAIL", id,
                criteria[k].first.c_str(), seconds_since(t0), v.detail.c_str());
  }
  return failed == 0 ? 0 : 1;
}
