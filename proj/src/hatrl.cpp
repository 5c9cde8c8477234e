#include "harl/hatrl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace harl {

void TrustRegionConfig::validate() const {
  if (!(inner_tol > 0.0)) fail(ErrorCode::config, "inner_tol must be positive");
  if (inner_iters < 1) fail(ErrorCode::config, "inner_iters must be positive");
  if (max_outer_iters < 0) fail(ErrorCode::config, "max_outer_iters must be nonnegative");
}

PermutationSampler::PermutationSampler(int n, std::uint64_t seed) : n_(n), rng_(seed) {
  require(n >= 1, "permutation size must be positive");
}

PermutationSampler::PermutationSampler(std::vector<int> order)
    : n_(static_cast<int>(order.size())), random_(false), fixed_(std::move(order)) {
  std::vector<int> sorted = fixed_;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n_; ++i)
    require(sorted[i] == i, "fixed order must be a permutation of 0..n-1");
}

std::vector<int> PermutationSampler::next() {
  if (!random_) return fixed_;
  return random_permutation(n_, rng_);
}

double penalty_coefficient(const CooperativeMarkovGame& game, const ValueProfile& profile) {
  double eps = 0.0;
  for (int s = 0; s < game.n_states(); ++s)
    for (int a = 0; a < game.n_joint(); ++a)
      eps = std::max(eps, std::abs(profile.advantage(s, a)));
  const double g = game.gamma();
  return 4.0 * g * eps / ((1.0 - g) * (1.0 - g));
}

AgentStepResult agent_tr_step(const CooperativeMarkovGame& game, const JointPolicy& policy,
                              const ValueProfile& profile, std::span<const int> prefix_agents,
                              const JointPolicy& prefix_policies, int agent,
                              const TrustRegionConfig& config) {
  config.validate();
  if (config.penalty_mode == PenaltyMode::max_kl_exact && game.n_states() != 1)
    fail(ErrorCode::config, "max-kl-exact penalty is only available for one-state games");
  const double C =
      config.penalty_override >= 0.0 ? config.penalty_override : penalty_coefficient(game, profile);
  const int S = game.n_states();
  const int na = game.n_actions(agent);
  const TabularPolicy& old = policy[agent];
  std::vector<double> out(static_cast<std::size_t>(S) * na);
  AgentStepResult res;
  double kl_sum = 0.0;
  for (int s = 0; s < S; ++s) {
    auto g = prefix_advantage(game, policy, profile, s, prefix_agents, prefix_policies, agent);
    auto p = old.row(s);
    std::vector<double> q;
    double c = C / profile.rho[s];
    if (!std::isfinite(c)) q.assign(p.begin(), p.end());
    else q = kl_prox_argmax(p, g, c, config.inner_tol, config.inner_iters);
    double e = 0.0;
    for (int a = 0; a < na; ++a) e += q[a] * g[a];
    res.surrogate += profile.rho[s] * e;
    kl_sum += kl_divergence(p, q);
    std::copy(q.begin(), q.end(), out.begin() + static_cast<std::ptrdiff_t>(s) * na);
  }
  res.penalty = C > 0.0 ? C * kl_sum : 0.0;
  res.objective = res.surrogate - res.penalty;
  if (res.objective < -1e-10 * std::max(1.0, std::abs(res.surrogate))) {
    std::ostringstream os;
    os << "agent step objective " << res.objective << " below the no-change value";
    fail(ErrorCode::convergence, os.str());
  }
  res.policy = TabularPolicy(S, na, std::move(out));
  return res;
}

namespace {

void check_monotone(double before, double after, double tol, int round) {
  if (after < before - tol) {
    std::ostringstream os;
    os.precision(17);
    os << "monotonic improvement violated at round " << round << ": " << before << " -> "
       << after;
    fail(ErrorCode::check_failed, os.str());
  }
}

}  // namespace

IterationResult policy_iteration(const CooperativeMarkovGame& game, const JointPolicy& pi0,
                                 PermutationSampler& sampler, const TrustRegionConfig& config) {
  config.validate();
  check_policy(game, pi0);
  require(sampler.n() == game.n_agents(), "sampler size must match the number of agents");
  IterationResult out;
  out.policy = pi0;
  ValueProfile profile = evaluate(game, out.policy);
  out.J.push_back(profile.J);
  for (int k = 0; k < config.max_outer_iters; ++k) {
    RoundLog log;
    log.round = k;
    log.permutation = sampler.next();
    log.J_before = profile.J;
    JointPolicy next = out.policy;
    std::vector<int> prefix;
    for (int agent : log.permutation) {
      auto step = agent_tr_step(game, out.policy, profile, prefix, next, agent, config);
      log.surrogate.push_back(step.surrogate);
      log.objective.push_back(step.objective);
      next[agent] = std::move(step.policy);
      prefix.push_back(agent);
    }
    ValueProfile after = evaluate(game, next);
    check_monotone(profile.J, after.J, config.monotonic_tol, k);
    log.J_after = after.J;
    if (config.log_gaps) log.gaps = best_response_gap(game, next).gaps;
    out.policy = std::move(next);
    profile = std::move(after);
    out.J.push_back(profile.J);
    out.rounds.push_back(std::move(log));
  }
  return out;
}

IterationResult simultaneous_iteration(const CooperativeMarkovGame& game, const JointPolicy& pi0,
                                       const TrustRegionConfig& config) {
  config.validate();
  check_policy(game, pi0);
  IterationResult out;
  out.policy = pi0;
  ValueProfile profile = evaluate(game, out.policy);
  out.J.push_back(profile.J);
  std::vector<int> order(game.n_agents());
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < config.max_outer_iters; ++k) {
    RoundLog log;
    log.round = k;
    log.permutation = order;
    log.J_before = profile.J;
    JointPolicy next = out.policy;
    for (int agent : order) {
      auto step = agent_tr_step(game, out.policy, profile, {}, out.policy, agent, config);
      log.surrogate.push_back(step.surrogate);
      log.objective.push_back(step.objective);
      next[agent] = std::move(step.policy);
    }
    out.policy = std::move(next);
    profile = evaluate(game, out.policy);
    log.J_after = profile.J;
    if (config.log_gaps) log.gaps = best_response_gap(game, out.policy).gaps;
    out.J.push_back(profile.J);
    out.rounds.push_back(std::move(log));
  }
  return out;
}

IterationResult haml_iteration(const CooperativeMarkovGame& game, const JointPolicy& pi0,
                               const std::vector<DriftSpec>& specs, PermutationSampler& sampler,
                               const TrustRegionConfig& config) {
  config.validate();
  check_policy(game, pi0);
  require(static_cast<int>(specs.size()) == game.n_agents(), "one drift spec per agent required");
  require(sampler.n() == game.n_agents(), "sampler size must match the number of agents");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto rep = check_hadf(specs[i], game, pi0, 200, mix_seed(0x4841444600ULL, i));
    if (!rep.passed())
      fail(ErrorCode::check_failed, "drift spec " + specs[i].name() + " is not a valid HADF");
  }
  SolverOptions opts{config.inner_tol, config.inner_iters};
  IterationResult out;
  out.policy = pi0;
  ValueProfile profile = evaluate(game, out.policy);
  out.J.push_back(profile.J);
  for (int k = 0; k < config.max_outer_iters; ++k) {
    RoundLog log;
    log.round = k;
    log.permutation = sampler.next();
    log.J_before = profile.J;
    JointPolicy next = out.policy;
    std::vector<int> prefix;
    for (int agent : log.permutation) {
      const auto& spec = specs[agent];
      TabularPolicy updated =
          haml_agent_update(spec, game, out.policy, profile, prefix, next, agent, opts);
      if (!in_neighbourhood(spec, game, profile, out.policy[agent], updated, 1e-9))
        fail(ErrorCode::convergence, "neighbourhood projection failure");
      auto beta = sampling_weights(spec, game, profile);
      double adv = 0.0, value = 0.0;
      for (int s = 0; s < game.n_states(); ++s) {
        auto h = hamo(spec, game, out.policy, profile, s, prefix, next, agent, updated.row(s));
        adv += beta[s] * h.advantage_term;
        value += beta[s] * h.value;
      }
      log.surrogate.push_back(adv);
      log.objective.push_back(value);
      next[agent] = std::move(updated);
      prefix.push_back(agent);
    }
    ValueProfile after = evaluate(game, next);
    check_monotone(profile.J, after.J, config.monotonic_tol, k);
    log.J_after = after.J;
    if (config.log_gaps) log.gaps = best_response_gap(game, next).gaps;
    out.policy = std::move(next);
    profile = std::move(after);
    out.J.push_back(profile.J);
    out.rounds.push_back(std::move(log));
  }
  return out;
}

std::string iteration_log_json(const IterationResult& result) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : result.rounds) {
    nlohmann::json j;
    j["round"] = r.round;
    j["permutation"] = r.permutation;
    j["surrogate"] = r.surrogate;
    j["objective"] = r.objective;
    j["J"] = r.J_after;
    if (!r.gaps.empty()) j["gaps"] = r.gaps;
    rounds.push_back(std::move(j));
  }
  nlohmann::json doc;
  doc["J"] = result.J;
  doc["rounds"] = std::move(rounds);
  return doc.dump(2);
}

}  // namespace harl
