#include "harl/props.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

#include "harl/haml.hpp"
#include "harl/hatrl.hpp"
#include "harl/nn.hpp"
#include "harl/oracle.hpp"

namespace harl {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + std::min(static_cast<int>(uniform01(rng) * (hi - lo + 1)), hi - lo);
}

// Every ordering of 0..n-1.
std::vector<std::vector<int>> all_permutations(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

// Calls f on every action tuple of `agents`.
void for_each_tuple(const CooperativeMarkovGame& game, const std::vector<int>& agents,
                    const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> a(agents.size(), 0);
  while (true) {
    f(a);
    std::size_t k = 0;
    for (; k < a.size(); ++k) {
      if (++a[k] < game.n_actions(agents[k])) break;
      a[k] = 0;
    }
    if (k == a.size()) return;
  }
}

}  // namespace

json SuiteVerdict::to_json() const {
  return json{{"suite", suite}, {"passed", passed}, {"seconds", seconds}, {"details", details}};
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"decomposition", "zero_mean", "estimator",
                                              "monotonicity",  "hadf",      "improvement",
                                              "haml",          "gradients"};
  return names;
}

bool is_suite(const std::string& name) {
  const auto& n = suite_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

SuiteVerdict run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "decomposition") return suite_decomposition(seed);
  if (name == "zero_mean") return suite_zero_mean(seed);
  if (name == "estimator") return suite_estimator(seed);
  if (name == "monotonicity") return suite_monotonicity(seed);
  if (name == "hadf") return suite_hadf(seed);
  if (name == "improvement") return suite_improvement(seed);
  if (name == "haml") return suite_haml(seed);
  if (name == "gradients") return suite_gradients(seed);
  fail(ErrorCode::config, "unknown suite '" + name + "'");
}

CooperativeMarkovGame random_fixture_game(Rng& rng) {
  int n = uniform_int(rng, 2, 3);
  int S = uniform_int(rng, 1, 5);
  std::vector<int> A(n);
  for (auto& a : A) a = uniform_int(rng, 2, 3);
  double gamma = 0.5 + 0.45 * uniform01(rng);
  return make_random_game(n, S, A, gamma, rng());
}

SuiteVerdict suite_decomposition(std::uint64_t seed, int n_games) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 11));
  const double tol = 1e-10;
  double worst = 0.0;
  long checks = 0;
  json witness;
  for (int g = 0; g < n_games; ++g) {
    auto game = random_fixture_game(rng);
    auto pi = random_joint_policy(game, rng);
    auto prof = evaluate(game, pi);
    const int n = game.n_agents();
    auto perms = all_permutations(n);
    for (int s = 0; s < game.n_states(); ++s)
      for (int j = 0; j < game.n_joint(); ++j) {
        auto a = game.decode_joint(j);
        double lhs = prof.advantage(s, j);
        for (const auto& order : perms) {
          double rhs = 0.0;
          std::vector<int> given, given_a;
          for (int i : order) {
            int ai = a[i];
            rhs += multiagent_adv(game, pi, prof, s, given, given_a, std::span<const int>(&i, 1),
                                  std::span<const int>(&ai, 1));
            given.push_back(i);
            given_a.push_back(ai);
          }
          double err = std::abs(lhs - rhs);
          ++checks;
          if (err > worst) {
            worst = err;
            if (err > tol && witness.is_null())
              witness = {{"game", g}, {"state", s}, {"joint", j}, {"order", order}};
          }
        }
      }
  }
  SuiteVerdict v;
  v.suite = "decomposition";
  v.passed = worst <= tol;
  v.seconds = seconds_since(t0);
  v.details = {{"games", n_games}, {"checks", checks}, {"worst_error", worst}, {"tolerance", tol}};
  if (!witness.is_null()) v.details["witness"] = witness;
  return v;
}

SuiteVerdict suite_zero_mean(std::uint64_t seed, int n_games) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 11));
  const double tol = 1e-10;
  double worst = 0.0;
  long checks = 0;
  for (int g = 0; g < n_games; ++g) {
    auto game = random_fixture_game(rng);
    auto pi = random_joint_policy(game, rng);
    auto prof = evaluate(game, pi);
    const int n = game.n_agents();
    for (int s = 0; s < game.n_states(); ++s)
      for (int i = 0; i < n; ++i) {
        std::vector<int> others;
        for (int k = 0; k < n; ++k)
          if (k != i) others.push_back(k);
        for (int mask = 0; mask < (1 << others.size()); ++mask) {
          std::vector<int> given;
          for (std::size_t k = 0; k < others.size(); ++k)
            if (mask & (1 << k)) given.push_back(others[k]);
          for_each_tuple(game, given, [&](const std::vector<int>& ga) {
            double e = 0.0;
            for (int a = 0; a < game.n_actions(i); ++a)
              e += pi[i](s, a) * multiagent_adv(game, pi, prof, s, given, ga,
                                                std::span<const int>(&i, 1),
                                                std::span<const int>(&a, 1));
            worst = std::max(worst, std::abs(e));
            ++checks;
          });
        }
      }
  }
  SuiteVerdict v;
  v.suite = "zero_mean";
  v.passed = worst <= tol;
  v.seconds = seconds_since(t0);
  v.details = {{"games", n_games}, {"checks", checks}, {"worst_error", worst}, {"tolerance", tol}};
  return v;
}

SuiteVerdict suite_estimator(std::uint64_t seed, int n_tuples) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 13));
  const double tol = 1e-10;
  double worst = 0.0;
  long checks = 0;
  for (int t = 0; t < n_tuples; ++t) {
    auto game = random_fixture_game(rng);
    auto pi = random_joint_policy(game, rng);
    auto bar = random_joint_policy(game, rng);
    auto prof = evaluate(game, pi);
    const int n = game.n_agents();
    auto perm = random_permutation(n, rng);
    int m = uniform_int(rng, 0, n - 1);
    std::vector<int> prefix(perm.begin(), perm.begin() + m);
    int agent = perm[m];
    auto hat = TabularPolicy::random(game.n_states(), game.n_actions(agent), rng);
    for (int s = 0; s < game.n_states(); ++s) {
      double l = estimator_identity_lhs(game, pi, prof, s, prefix, bar, agent, hat);
      double r = estimator_identity_rhs(game, pi, prof, s, prefix, bar, agent, hat);
      worst = std::max(worst, std::abs(l - r));
      ++checks;
    }
  }
  SuiteVerdict v;
  v.suite = "estimator";
  v.passed = worst <= tol;
  v.seconds = seconds_since(t0);
  v.details = {{"tuples", n_tuples}, {"checks", checks}, {"worst_error", worst}, {"tolerance", tol}};
  return v;
}

SuiteVerdict suite_monotonicity(std::uint64_t seed, int n_games, int n_seeds, int rounds) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 17));
  const double tol = 1e-9;
  double worst_drop = 0.0;
  int runs = 0;
  bool ok = true;
  std::string error;
  TrustRegionConfig cfg;
  cfg.max_outer_iters = rounds;
  cfg.monotonic_tol = tol;
  for (int g = 0; g < n_games && ok; ++g) {
    auto game = random_fixture_game(rng);
    for (int k = 0; k < n_seeds; ++k) {
      std::uint64_t run_seed = mix_seed(seed, 1000 + static_cast<std::uint64_t>(g * n_seeds + k));
      Rng prng(run_seed);
      auto pi0 = random_joint_policy(game, prng);
      PermutationSampler sampler(game.n_agents(), run_seed);
      try {
        auto res = policy_iteration(game, pi0, sampler, cfg);
        for (std::size_t r = 1; r < res.J.size(); ++r)
          worst_drop = std::max(worst_drop, res.J[r - 1] - res.J[r]);
      } catch (const Error& e) {
        ok = false;
        error = e.what();
        break;
      }
      ++runs;
    }
  }
  if (worst_drop > tol) ok = false;

  // Nash certification of the limits.
  json ne = json::array();
  const double gap_tol = 1e-6;
  auto certify = [&](const std::string& name, const CooperativeMarkovGame& game,
                     const std::function<JointPolicy(Rng&)>& init) {
    double worst_gap = 0.0;
    for (int k = 0; k < n_seeds; ++k) {
      std::uint64_t run_seed = mix_seed(seed, 5000 + static_cast<std::uint64_t>(k));
      Rng prng(run_seed);
      PermutationSampler sampler(game.n_agents(), run_seed);
      auto res = policy_iteration(game, init(prng), sampler, cfg);
      for (std::size_t r = 1; r < res.J.size(); ++r)
        worst_drop = std::max(worst_drop, res.J[r - 1] - res.J[r]);
      auto gaps = best_response_gap(game, res.policy).gaps;
      worst_gap = std::max(worst_gap, *std::max_element(gaps.begin(), gaps.end()));
    }
    bool pass = worst_gap < gap_tol;
    ok = ok && pass;
    ne.push_back({{"game", name}, {"worst_gap", worst_gap}, {"passed", pass}});
  };
  if (ok) {
    auto ex2 = make_matrix_game_example2();
    certify("example2", ex2, [&](Rng&) {
      JointPolicy pi;
      for (int i = 0; i < 2; ++i) pi.emplace_back(1, 2, std::vector<double>{0.7, 0.3});
      return pi;
    });
    auto xor2 = make_xor_team_game(2);
    certify("xor2", xor2, [&](Rng& r) { return random_joint_policy(xor2, r); });
    ok = ok && worst_drop <= tol;
  }

  SuiteVerdict v;
  v.suite = "monotonicity";
  v.passed = ok;
  v.seconds = seconds_since(t0);
  v.details = {{"games", n_games},         {"seeds", n_seeds},   {"rounds", rounds},
               {"runs", runs},             {"worst_drop", worst_drop},
               {"tolerance", tol},         {"nash", ne}};
  if (!error.empty()) v.details["error"] = error;
  return v;
}

namespace {

json hadf_json(const HadfReport& r) {
  json j{{"drift", r.drift},
         {"samples", r.samples},
         {"passed", r.passed()},
         {"nonnegative", r.nonnegative},
         {"zero_at_current", r.zero_at_current},
         {"zero_gradient", r.zero_gradient},
         {"worst_negative", r.worst_negative},
         {"worst_at_current", r.worst_at_current},
         {"worst_derivative", r.worst_derivative},
         {"classification", r.classification}};
  if (r.has_witness)
    j["witness"] = {{"state", r.witness_state},
                    {"agent", r.witness_agent},
                    {"prefix", r.witness_prefix},
                    {"candidate", r.witness_candidate},
                    {"axiom", r.witness_axiom}};
  return j;
}

}  // namespace

SuiteVerdict suite_hadf(std::uint64_t seed, int n_triples) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 19));
  const int n_games = 10;
  const int per_game = std::max(1, n_triples / n_games);
  std::vector<CooperativeMarkovGame> games;
  std::vector<JointPolicy> policies;
  for (int g = 0; g < n_games; ++g) {
    games.push_back(random_fixture_game(rng));
    policies.push_back(random_joint_policy(games.back(), rng));
  }
  struct Case {
    DriftSpec spec;
    bool expect_pass;
    int per_game;
  };
  DriftSpec negated = DriftSpec::kl(1.0);
  negated.drift = DriftKind::negated_kl;
  std::vector<Case> cases{{DriftSpec::happo(0.2), true, per_game},
                          {DriftSpec::trivial_full(), true, 100},
                          {DriftSpec::kl(1.0), true, 100},
                          {negated, false, 100}};
  bool ok = true;
  json results = json::array();
  for (const auto& c : cases) {
    HadfReport total;
    total.drift = c.spec.name();
    json per = json::array();
    for (int g = 0; g < n_games; ++g) {
      auto r = check_hadf(c.spec, games[g], policies[g], c.per_game, mix_seed(seed, 200 + g));
      total.samples += r.samples;
      total.nonnegative = total.nonnegative && r.nonnegative;
      total.zero_at_current = total.zero_at_current && r.zero_at_current;
      total.zero_gradient = total.zero_gradient && r.zero_gradient;
      total.worst_negative = std::min(total.worst_negative, r.worst_negative);
      total.worst_at_current = std::max(total.worst_at_current, r.worst_at_current);
      total.worst_derivative = std::max(total.worst_derivative, r.worst_derivative);
      if (total.classification.empty() || total.classification == r.classification)
        total.classification = r.classification;
      else
        total.classification = "mixed";
      if (r.has_witness && !total.has_witness) {
        total.has_witness = true;
        total.witness_state = r.witness_state;
        total.witness_agent = r.witness_agent;
        total.witness_prefix = r.witness_prefix;
        total.witness_candidate = r.witness_candidate;
        total.witness_axiom = r.witness_axiom;
      }
    }
    json j = hadf_json(total);
    j["expected"] = c.expect_pass ? "pass" : "fail";
    if (total.passed() != c.expect_pass) ok = false;
    results.push_back(j);
  }
  SuiteVerdict v;
  v.suite = "hadf";
  v.passed = ok;
  v.seconds = seconds_since(t0);
  v.details = {{"games", n_games}, {"drifts", results}};
  return v;
}

SuiteVerdict suite_improvement(std::uint64_t seed, int n_games) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 23));
  const double tol = 1e-9;
  bool ok = true;
  double worst_value = std::numeric_limits<double>::infinity();
  double worst_hamo = std::numeric_limits<double>::infinity();
  for (int g = 0; g < n_games; ++g) {
    auto game = random_fixture_game(rng);
    auto pi = random_joint_policy(game, rng);
    auto order = random_permutation(game.n_agents(), rng);
    for (const auto& spec : {DriftSpec::happo(0.2), DriftSpec::kl(1.0), DriftSpec::trivial_full()}) {
      auto r = check_state_improvement(spec, game, pi, order, tol);
      ok = ok && r.passed;
      worst_value = std::min(worst_value, r.worst_value_gap);
      worst_hamo = std::min(worst_hamo, r.worst_hamo_gap);
    }
  }
  SuiteVerdict v;
  v.suite = "improvement";
  v.passed = ok;
  v.seconds = seconds_since(t0);
  v.details = {{"games", n_games},
               {"drifts", {"happo_clip", "kl", "trivial"}},
               {"worst_value_gap", worst_value},
               {"worst_hamo_gap", worst_hamo},
               {"tolerance", tol}};
  return v;
}

SuiteVerdict suite_haml(std::uint64_t seed, int max_rounds) {
  auto t0 = std::chrono::steady_clock::now();
  auto game = make_matrix_game_example2();
  JointPolicy pi0;
  for (int i = 0; i < 2; ++i) pi0.emplace_back(1, 2, std::vector<double>{0.7, 0.3});
  const double gap_tol = 1e-6, mono_tol = 1e-9;
  bool ok = true;
  json results = json::array();
  for (const auto& spec : {DriftSpec::trivial_kl_ball(0.1), DriftSpec::happo(0.2)}) {
    TrustRegionConfig cfg;
    cfg.monotonic_tol = mono_tol;
    cfg.max_outer_iters = 1;
    PermutationSampler sampler(2, mix_seed(seed, 29));
    JointPolicy pi = pi0;
    std::vector<double> J{evaluate(game, pi).J};
    double gap = 0.0, worst_drop = 0.0;
    int rounds = 0;
    std::string error;
    try {
      for (; rounds < max_rounds; ++rounds) {
        auto res = haml_iteration(game, pi, {spec, spec}, sampler, cfg);
        pi = res.policy;
        J.push_back(res.J.back());
        worst_drop = std::max(worst_drop, J[J.size() - 2] - J.back());
        auto gaps = best_response_gap(game, pi).gaps;
        gap = *std::max_element(gaps.begin(), gaps.end());
        if (gap < gap_tol) {
          ++rounds;
          break;
        }
      }
    } catch (const Error& e) {
      error = e.what();
    }
    bool pass = error.empty() && worst_drop <= mono_tol && gap < gap_tol;
    ok = ok && pass;
    json j{{"drift", spec.name()}, {"rounds", rounds},     {"final_J", J.back()},
           {"gap", gap},           {"worst_drop", worst_drop}, {"passed", pass}};
    if (!error.empty()) j["error"] = error;
    results.push_back(j);
  }
  SuiteVerdict v;
  v.suite = "haml";
  v.passed = ok;
  v.seconds = seconds_since(t0);
  v.details = {{"game", "example2"}, {"gap_tolerance", gap_tol}, {"specs", results}};
  return v;
}

// ---- gradients ----

namespace {

using ScalarFn = std::function<double(const Vec&)>;

Vec fd_gradient(const ScalarFn& f, Vec x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    double x0 = x[k];
    x[k] = x0 + h;
    double fp = f(x);
    x[k] = x0 - h;
    double fm = f(x);
    x[k] = x0;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central second differences of f at x.
Mat fd_hessian(const ScalarFn& f, Vec x, double h = 1e-4) {
  const Eigen::Index n = x.size();
  Mat H(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      auto at = [&](double si, double sj) {
        Vec y = x;
        y[i] += si * h;
        y[j] += sj * h;
        return f(y);
      };
      H(i, j) = H(j, i) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
    }
  return H;
}

double rel_err(const Mat& a, const Mat& b) {
  double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal01(rng);
  return m;
}

Mat one_hot_columns(int dim, const std::vector<int>& idx) {
  Mat m = Mat::Zero(dim, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t b = 0; b < idx.size(); ++b) m(idx[b], static_cast<Eigen::Index>(b)) = 1.0;
  return m;
}

}  // namespace

SuiteVerdict suite_gradients(std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(seed, 31));
  const double grad_tol = 1e-4, fvp_tol = 1e-3;
  json checks = json::array();
  bool ok = true;
  auto record = [&](const std::string& name, double err, double tol) {
    bool pass = err < tol;
    ok = ok && pass;
    checks.push_back({{"op", name}, {"rel_error", err}, {"tolerance", tol}, {"passed", pass}});
  };

  // Mlp parameters, inputs and forward-mode products.
  for (Activation act : {Activation::tanh, Activation::relu}) {
    const std::string tag = activation_name(act);
    Mlp net({4, 6, 5, 3}, act, Activation::tanh, 1.0, rng);
    Mat x = random_mat(4, 7, rng);
    Mat c = random_mat(3, 7, rng);
    Mlp::Cache cache;
    net.forward(x, &cache);
    Vec g = Vec::Zero(net.n_params());
    Mat gx = net.backward(cache, c, g, true);
    Vec theta = net.params();
    ScalarFn f = [&](const Vec& p) {
      Mlp m = net;
      m.params() = p;
      return m.forward(x).cwiseProduct(c).sum();
    };
    record("mlp_param_grad_" + tag, rel_err(g, fd_gradient(f, theta)), grad_tol);
    ScalarFn fx = [&](const Vec& xv) {
      Mat xm = Eigen::Map<const Mat>(xv.data(), 4, 7);
      return net.forward(xm).cwiseProduct(c).sum();
    };
    Vec xv = Eigen::Map<const Vec>(x.data(), x.size());
    Vec gxv = Eigen::Map<const Vec>(gx.data(), gx.size());
    record("mlp_input_grad_" + tag, rel_err(gxv, fd_gradient(fx, xv)), grad_tol);
    Vec v = random_mat(net.n_params(), 1, rng);
    Mat jv = net.jvp(cache, v);
    const double h = 1e-6;
    Mlp plus = net, minus = net;
    plus.params() = theta + h * v;
    minus.params() = theta - h * v;
    Mat fdj = (plus.forward(x) - minus.forward(x)) / (2.0 * h);
    record("mlp_jvp_" + tag, rel_err(jv, fdj), grad_tol);
  }
  {
    Mlp net({5, 4, 3}, Activation::relu, Activation::identity, 1.0, rng);
    Mat x = one_hot_columns(5, {0, 3, 3, 1, 4, 2});
    Mat c = random_mat(3, 6, rng);
    Mlp::Cache cache;
    net.forward(x, &cache);
    Vec g = Vec::Zero(net.n_params());
    net.backward(cache, c, g);
    ScalarFn f = [&](const Vec& p) {
      Mlp m = net;
      m.params() = p;
      return m.forward(x).cwiseProduct(c).sum();
    };
    record("mlp_onehot_param_grad", rel_err(g, fd_gradient(f, net.params())), grad_tol);
  }

  // Tabular fixture: one-hot states.
  const int S = 4, A = 3;
  Mat obs = one_hot_columns(S, {0, 1, 2, 3, 1, 2});
  for (const std::vector<int>& hidden : {std::vector<int>{}, std::vector<int>{5}}) {
    const std::string tag = hidden.empty() ? "linear" : "hidden";
    CategoricalPolicy pol(S, hidden, A, Activation::tanh, 1.0, rng);
    Mat acts(1, 6);
    acts << 0, 2, 1, 1, 0, 2;
    Vec w = random_mat(6, 1, rng);
    Vec theta = pol.get_params();
    auto with = [&](const Vec& p) {
      CategoricalPolicy q = pol;
      q.set_params(p);
      return q;
    };
    record("categorical_grad_log_prob_" + tag,
           rel_err(pol.grad_log_prob(obs, acts, w),
                   fd_gradient([&](const Vec& p) { return with(p).log_prob(obs, acts).dot(w); },
                               theta)),
           grad_tol);
    Vec ge;
    pol.entropy(obs, &ge);
    record("categorical_entropy_grad_" + tag,
           rel_err(ge, fd_gradient([&](const Vec& p) { return with(p).entropy(obs, nullptr); },
                                   theta)),
           grad_tol);
    Mat old = pol.probs(obs);
    Mat H = fd_hessian([&](const Vec& p) { return with(p).mean_kl(obs, old); }, theta);
    Vec v = random_mat(pol.n_params(), 1, rng);
    record("categorical_fvp_" + tag, rel_err(pol.fisher_vector_product(obs, v), H * v), fvp_tol);
  }
  {
    DiagGaussianPolicy pol(S, {5}, 2, Activation::tanh, 1.0, std::log(0.5), true, -1.0, 1.0, rng);
    Mat acts = random_mat(2, 6, rng);
    Vec w = random_mat(6, 1, rng);
    Vec theta = pol.get_params();
    auto with = [&](const Vec& p) {
      DiagGaussianPolicy q = pol;
      q.set_params(p);
      return q;
    };
    record("gaussian_grad_log_prob",
           rel_err(pol.grad_log_prob(obs, acts, w),
                   fd_gradient([&](const Vec& p) { return with(p).log_prob(obs, acts).dot(w); },
                               theta)),
           grad_tol);
    Vec ge;
    pol.entropy(obs, &ge);
    record("gaussian_entropy_grad",
           rel_err(ge, fd_gradient([&](const Vec& p) { return with(p).entropy(obs, nullptr); },
                                   theta)),
           grad_tol);
    Mat old_mean = pol.mean(obs);
    Vec old_std = pol.log_std();
    Mat H = fd_hessian(
        [&](const Vec& p) { return with(p).mean_kl(obs, old_mean, old_std); }, theta);
    Vec v = random_mat(pol.n_params(), 1, rng);
    record("gaussian_fvp", rel_err(pol.fisher_vector_product(obs, v), H * v), fvp_tol);
  }
  {
    DeterministicPolicy pol(3, {6}, 2, Activation::relu, 1.0, -2.0, 1.0, rng);
    Mat x = random_mat(3, 5, rng);
    Mat c = random_mat(2, 5, rng);
    Mlp::Cache cache;
    pol.act(x, &cache);
    Vec g = pol.backprop(cache, c);
    ScalarFn f = [&](const Vec& p) {
      DeterministicPolicy q = pol;
      q.net().params() = p;
      return q.act(x).cwiseProduct(c).sum();
    };
    record("deterministic_backprop", rel_err(g, fd_gradient(f, pol.net().params())), grad_tol);
  }
  {
    DuelingNet net(3, {5}, {4}, 4, Activation::tanh, rng);
    Mat x = random_mat(3, 6, rng);
    std::vector<int> a{0, 3, 1, 2, 2, 0};
    Vec y = random_mat(6, 1, rng);
    Vec g = Vec::Zero(net.n_params());
    net.td_gradient(x, a, y, g);
    ScalarFn f = [&](const Vec& p) {
      DuelingNet q = net;
      q.set_params(p);
      Vec scratch = Vec::Zero(q.n_params());
      return q.td_gradient(x, a, y, scratch);
    };
    record("dueling_td_grad", rel_err(g, fd_gradient(f, net.get_params())), grad_tol);
  }
  {
    double worst = 0.0;
    for (double r : {-25.0, -3.0, -0.4, 0.2, 2.5, 40.0}) {
      double fd = (huber(r + 1e-6, 10.0) - huber(r - 1e-6, 10.0)) / 2e-6;
      worst = std::max(worst, std::abs(fd - huber_grad(r, 10.0)) / std::max(1.0, std::abs(fd)));
    }
    record("huber_grad", worst, grad_tol);
  }

  SuiteVerdict v;
  v.suite = "gradients";
  v.passed = ok;
  v.seconds = seconds_since(t0);
  v.details = {{"checks", checks}};
  return v;
}

}  // namespace harl
