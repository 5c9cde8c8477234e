#include "harl/oracle.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace harl {

TabularPolicy::TabularPolicy(int n_states, int n_actions)
    : n_states_(n_states),
      n_actions_(n_actions),
      prob_(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions) {
  require(n_states >= 1 && n_actions >= 1, "policy shape must be positive");
}

TabularPolicy::TabularPolicy(int n_states, int n_actions, std::vector<double> prob)
    : n_states_(n_states), n_actions_(n_actions), prob_(std::move(prob)) {
  require(n_states >= 1 && n_actions >= 1, "policy shape must be positive");
  require(prob_.size() == static_cast<std::size_t>(n_states) * n_actions,
          "policy table has the wrong size");
  validate();
}

TabularPolicy TabularPolicy::deterministic(int n_states, int n_actions,
                                           const std::vector<int>& action) {
  require(static_cast<int>(action.size()) == n_states, "one action per state required");
  std::vector<double> prob(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  for (int s = 0; s < n_states; ++s) {
    require(action[s] >= 0 && action[s] < n_actions, "action out of range");
    prob[s * n_actions + action[s]] = 1.0;
  }
  return {n_states, n_actions, std::move(prob)};
}

TabularPolicy TabularPolicy::random(int n_states, int n_actions, Rng& rng) {
  std::vector<double> prob(static_cast<std::size_t>(n_states) * n_actions);
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      double x = 0.05 + uniform01(rng);
      prob[s * n_actions + a] = x;
      sum += x;
    }
    for (int a = 0; a < n_actions; ++a) prob[s * n_actions + a] /= sum;
  }
  return {n_states, n_actions, std::move(prob)};
}

void TabularPolicy::validate() const {
  for (int s = 0; s < n_states_; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions_; ++a) {
      double p = (*this)(s, a);
      if (!(p >= 0.0)) fail(ErrorCode::invalid_argument, "policy entries must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "policy row " << s << " sums to " << sum;
      fail(ErrorCode::invalid_argument, os.str());
    }
  }
}

JointPolicy uniform_joint_policy(const CooperativeMarkovGame& game) {
  JointPolicy pi;
  for (int i = 0; i < game.n_agents(); ++i)
    pi.emplace_back(game.n_states(), game.n_actions(i));
  return pi;
}

JointPolicy random_joint_policy(const CooperativeMarkovGame& game, Rng& rng) {
  JointPolicy pi;
  for (int i = 0; i < game.n_agents(); ++i)
    pi.push_back(TabularPolicy::random(game.n_states(), game.n_actions(i), rng));
  return pi;
}

JointPolicy deterministic_joint_policy(const CooperativeMarkovGame& game,
                                       const std::vector<int>& joint_action_per_state) {
  require(static_cast<int>(joint_action_per_state.size()) == game.n_states(),
          "one joint action per state required");
  JointPolicy pi;
  for (int i = 0; i < game.n_agents(); ++i) {
    std::vector<int> acts(game.n_states());
    for (int s = 0; s < game.n_states(); ++s)
      acts[s] = game.agent_action(joint_action_per_state[s], i);
    pi.push_back(TabularPolicy::deterministic(game.n_states(), game.n_actions(i), acts));
  }
  return pi;
}

void check_policy(const CooperativeMarkovGame& game, const JointPolicy& policy) {
  require(static_cast<int>(policy.size()) == game.n_agents(), "policy needs one entry per agent");
  for (int i = 0; i < game.n_agents(); ++i) {
    require(policy[i].n_states() == game.n_states() &&
                policy[i].n_actions() == game.n_actions(i),
            "policy shape does not match the game");
  }
}

void joint_probs(const CooperativeMarkovGame& game, const JointPolicy& policy, int s,
                 std::vector<double>& out) {
  out.assign(game.n_joint(), 1.0);
  // Fill the product in row-major order agent by agent.
  int block = game.n_joint();
  for (int i = 0; i < game.n_agents(); ++i) {
    int stride = game.stride(i);
    int na = game.n_actions(i);
    block = stride * na;
    for (int j = 0; j < game.n_joint(); ++j) out[j] *= policy[i](s, (j % block) / stride);
  }
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Solves M x = b, M = I - gamma P given by triplets.
Eigen::VectorXd linear_solve(int n, const std::vector<Eigen::Triplet<double>>& trips,
                             const Eigen::VectorXd& b) {
  if (n <= 400) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (const auto& t : trips) M(t.row(), t.col()) += t.value();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    Eigen::VectorXd x = lu.solve(b);
    Eigen::VectorXd r = b - M * x;
    x += lu.solve(r);
    return x;
  }
  SpMat M(n, n);
  M.setFromTriplets(trips.begin(), trips.end());
  M.makeCompressed();
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(M);
  if (lu.info() != Eigen::Success) fail(ErrorCode::numeric, "sparse factorization failed");
  Eigen::VectorXd x = lu.solve(b);
  Eigen::VectorXd r = b - M * x;
  x += lu.solve(r);
  return x;
}

double residual_norm(const std::vector<Eigen::Triplet<double>>& trips,
                     const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  Eigen::VectorXd r = b;
  for (const auto& t : trips) r[t.row()] -= t.value() * x[t.col()];
  return r.lpNorm<Eigen::Infinity>();
}

}  // namespace

ValueProfile evaluate(const CooperativeMarkovGame& game, const JointPolicy& policy) {
  check_policy(game, policy);
  const int n = game.n_states();
  const int nj = game.n_joint();
  const double gamma = game.gamma();
  std::vector<Eigen::Triplet<double>> trips, trips_t;
  Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(n);
  std::vector<double> w;
  std::vector<double> row_acc(n, 0.0);
  std::vector<int> touched;
  for (int s = 0; s < n; ++s) {
    joint_probs(game, policy, s, w);
    touched.clear();
    for (int a = 0; a < nj; ++a) {
      if (w[a] == 0.0) continue;
      r_pi[s] += w[a] * game.reward(s, a);
      auto next = game.next_states(s, a);
      auto prob = game.next_probs(s, a);
      for (std::size_t k = 0; k < next.size(); ++k) {
        if (row_acc[next[k]] == 0.0) touched.push_back(next[k]);
        row_acc[next[k]] += w[a] * prob[k];
      }
    }
    bool diag = false;
    for (int t : touched) {
      double v = -gamma * row_acc[t];
      if (t == s) {
        v += 1.0;
        diag = true;
      }
      trips.emplace_back(s, t, v);
      trips_t.emplace_back(t, s, v);
      row_acc[t] = 0.0;
    }
    if (!diag) {
      trips.emplace_back(s, s, 1.0);
      trips_t.emplace_back(s, s, 1.0);
    }
  }
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(game.initial_dist().data(), n);
  Eigen::VectorXd V = linear_solve(n, trips, r_pi);
  Eigen::VectorXd rho = linear_solve(n, trips_t, d);
  double scale = std::max(1.0, V.lpNorm<Eigen::Infinity>());
  double res_v = residual_norm(trips, V, r_pi);
  double res_rho = residual_norm(trips_t, rho, d);
  if (res_v > 1e-10 * scale || res_rho > 1e-10 * std::max(1.0, rho.lpNorm<Eigen::Infinity>())) {
    std::ostringstream os;
    os << "policy evaluation residual too large (" << res_v << ", " << res_rho << ")";
    fail(ErrorCode::numeric, os.str());
  }

  ValueProfile out;
  out.n_states = n;
  out.n_joint = nj;
  out.V.assign(V.data(), V.data() + n);
  out.rho.assign(rho.data(), rho.data() + n);
  out.Q.resize(static_cast<std::size_t>(n) * nj);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < nj; ++a) {
      double q = game.reward(s, a);
      auto next = game.next_states(s, a);
      auto prob = game.next_probs(s, a);
      double ev = 0.0;
      for (std::size_t k = 0; k < next.size(); ++k) ev += prob[k] * out.V[next[k]];
      out.Q[static_cast<std::size_t>(s) * nj + a] = q + gamma * ev;
    }
  }
  out.J = 0.0;
  for (int s = 0; s < n; ++s) out.J += game.initial_dist()[s] * out.V[s];
  return out;
}

namespace {

void check_agent_list(const CooperativeMarkovGame& game, std::span<const int> agents,
                      std::vector<char>& mask) {
  mask.assign(game.n_agents(), 0);
  for (int i : agents) {
    require(i >= 0 && i < game.n_agents(), "agent index out of range");
    if (mask[i]) fail(ErrorCode::invalid_argument, "duplicate agent in list");
    mask[i] = 1;
  }
}

}  // namespace

double multiagent_q(const CooperativeMarkovGame& game, const JointPolicy& policy,
                    const ValueProfile& profile, int s, std::span<const int> agents,
                    std::span<const int> actions) {
  require(agents.size() == actions.size(), "agents and actions must align");
  std::vector<char> fixed;
  check_agent_list(game, agents, fixed);
  for (std::size_t k = 0; k < agents.size(); ++k)
    require(actions[k] >= 0 && actions[k] < game.n_actions(agents[k]), "action out of range");
  double total = 0.0;
  for (int a = 0; a < game.n_joint(); ++a) {
    double w = 1.0;
    bool match = true;
    for (std::size_t k = 0; k < agents.size() && match; ++k)
      match = game.agent_action(a, agents[k]) == actions[k];
    if (!match) continue;
    for (int i = 0; i < game.n_agents() && w != 0.0; ++i)
      if (!fixed[i]) w *= policy[i](s, game.agent_action(a, i));
    if (w != 0.0) total += w * profile.q(s, a);
  }
  return total;
}

double multiagent_adv(const CooperativeMarkovGame& game, const JointPolicy& policy,
                      const ValueProfile& profile, int s, std::span<const int> given_agents,
                      std::span<const int> given_actions, std::span<const int> of_agents,
                      std::span<const int> of_actions) {
  require(given_agents.size() == given_actions.size() && of_agents.size() == of_actions.size(),
          "agents and actions must align");
  std::vector<int> all_agents(given_agents.begin(), given_agents.end());
  std::vector<int> all_actions(given_actions.begin(), given_actions.end());
  for (std::size_t k = 0; k < of_agents.size(); ++k) {
    if (std::find(given_agents.begin(), given_agents.end(), of_agents[k]) != given_agents.end())
      fail(ErrorCode::invalid_argument, "agent subsets must be disjoint");
    all_agents.push_back(of_agents[k]);
    all_actions.push_back(of_actions[k]);
  }
  return multiagent_q(game, policy, profile, s, all_agents, all_actions) -
         multiagent_q(game, policy, profile, s, given_agents, given_actions);
}

std::vector<double> prefix_advantage(const CooperativeMarkovGame& game,
                                     const JointPolicy& policy, const ValueProfile& profile,
                                     int s, std::span<const int> prefix_agents,
                                     const JointPolicy& prefix_policies, int agent) {
  std::vector<char> in_prefix;
  check_agent_list(game, prefix_agents, in_prefix);
  require(agent >= 0 && agent < game.n_agents(), "agent index out of range");
  require(!in_prefix[agent], "agent cannot be part of its own prefix");
  require(prefix_policies.size() == policy.size(), "prefix policies must be indexed by agent");
  const int na = game.n_actions(agent);
  // G(a) = E_{prefix ~ bar, rest ~ pi}[Q(s, a^{prefix}, a, a^{rest})].
  std::vector<double> G(na, 0.0);
  for (int j = 0; j < game.n_joint(); ++j) {
    double w = 1.0;
    for (int i = 0; i < game.n_agents() && w != 0.0; ++i) {
      if (i == agent) continue;
      int ai = game.agent_action(j, i);
      w *= in_prefix[i] ? prefix_policies[i](s, ai) : policy[i](s, ai);
    }
    if (w != 0.0) G[game.agent_action(j, agent)] += w * profile.q(s, j);
  }
  double baseline = 0.0;
  for (int a = 0; a < na; ++a) baseline += policy[agent](s, a) * G[a];
  for (auto& g : G) g -= baseline;
  return G;
}

std::vector<std::vector<double>> prefix_advantage_table(const CooperativeMarkovGame& game,
                                                        const JointPolicy& policy,
                                                        const ValueProfile& profile,
                                                        std::span<const int> prefix_agents,
                                                        const JointPolicy& prefix_policies,
                                                        int agent) {
  std::vector<std::vector<double>> out(game.n_states());
  for (int s = 0; s < game.n_states(); ++s)
    out[s] = prefix_advantage(game, policy, profile, s, prefix_agents, prefix_policies, agent);
  return out;
}

double surrogate_L(const CooperativeMarkovGame& game, const JointPolicy& policy,
                   const ValueProfile& profile, std::span<const int> prefix_agents,
                   const JointPolicy& prefix_policies, int agent, const TabularPolicy& pi_hat) {
  require(pi_hat.n_states() == game.n_states() && pi_hat.n_actions() == game.n_actions(agent),
          "candidate policy shape mismatch");
  double total = 0.0;
  for (int s = 0; s < game.n_states(); ++s) {
    auto g = prefix_advantage(game, policy, profile, s, prefix_agents, prefix_policies, agent);
    double e = 0.0;
    for (int a = 0; a < game.n_actions(agent); ++a) e += pi_hat(s, a) * g[a];
    total += profile.rho[s] * e;
  }
  return total;
}

BestResponseReport best_response_gap(const CooperativeMarkovGame& game,
                                     const JointPolicy& policy, double tol, long max_sweeps) {
  check_policy(game, policy);
  const int n = game.n_states();
  const double gamma = game.gamma();
  ValueProfile base = evaluate(game, policy);
  BestResponseReport rep;
  rep.J = base.J;
  for (int i = 0; i < game.n_agents(); ++i) {
    const int na = game.n_actions(i);
    // Induced single-agent MDP with the other agents frozen.
    std::vector<double> r(static_cast<std::size_t>(n) * na, 0.0);
    std::vector<std::vector<std::pair<int, double>>> P(static_cast<std::size_t>(n) * na);
    std::vector<double> acc(n, 0.0);
    std::vector<int> touched;
    for (int s = 0; s < n; ++s) {
      for (int ai = 0; ai < na; ++ai) {
        touched.clear();
        for (int j = 0; j < game.n_joint(); ++j) {
          if (game.agent_action(j, i) != ai) continue;
          double w = 1.0;
          for (int k = 0; k < game.n_agents() && w != 0.0; ++k)
            if (k != i) w *= policy[k](s, game.agent_action(j, k));
          if (w == 0.0) continue;
          r[s * na + ai] += w * game.reward(s, j);
          auto next = game.next_states(s, j);
          auto prob = game.next_probs(s, j);
          for (std::size_t q = 0; q < next.size(); ++q) {
            if (acc[next[q]] == 0.0) touched.push_back(next[q]);
            acc[next[q]] += w * prob[q];
          }
        }
        auto& row = P[s * na + ai];
        for (int t : touched) {
          row.emplace_back(t, acc[t]);
          acc[t] = 0.0;
        }
      }
    }
    std::vector<double> V(n, 0.0), Vn(n);
    long sweep = 0;
    for (;;) {
      double delta = 0.0;
      for (int s = 0; s < n; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int ai = 0; ai < na; ++ai) {
          double q = r[s * na + ai];
          for (auto [t, p] : P[s * na + ai]) q += gamma * p * V[t];
          best = std::max(best, q);
        }
        Vn[s] = best;
        delta = std::max(delta, std::abs(best - V[s]));
      }
      V.swap(Vn);
      ++sweep;
      if (delta <= tol) break;
      if (sweep >= max_sweeps) {
        std::ostringstream os;
        os << "value iteration did not converge for agent " << i << " (residual " << delta << ")";
        fail(ErrorCode::convergence, os.str());
      }
    }
    std::vector<int> greedy(n, 0);
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int ai = 0; ai < na; ++ai) {
        double q = r[s * na + ai];
        for (auto [t, p] : P[s * na + ai]) q += gamma * p * V[t];
        // Strict improvement beyond round-off keeps the lowest index on ties.
        if (ai == 0 || q > best + 1e-12 * std::max(1.0, std::abs(best))) {
          best = q;
          greedy[s] = ai;
        }
      }
    }
    JointPolicy deviated = policy;
    deviated[i] = TabularPolicy::deterministic(n, na, greedy);
    double best_J = evaluate(game, deviated).J;
    rep.best_J.push_back(best_J);
    rep.gaps.push_back(best_J - base.J);
    rep.best_response.push_back(deviated[i]);
    rep.sweeps.push_back(static_cast<int>(sweep));
  }
  return rep;
}

OptimalReport optimal_joint(const CooperativeMarkovGame& game, double tol, long max_sweeps) {
  const int n = game.n_states();
  const int nj = game.n_joint();
  const double gamma = game.gamma();
  auto backup = [&](const std::vector<double>& V, int s, int j) {
    double q = game.reward(s, j);
    auto next = game.next_states(s, j);
    auto prob = game.next_probs(s, j);
    for (std::size_t k = 0; k < next.size(); ++k) q += gamma * prob[k] * V[next[k]];
    return q;
  };
  OptimalReport rep;
  rep.V.assign(n, 0.0);
  std::vector<double> Vn(n);
  for (;;) {
    double delta = 0.0;
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < nj; ++j) best = std::max(best, backup(rep.V, s, j));
      Vn[s] = best;
      delta = std::max(delta, std::abs(best - rep.V[s]));
    }
    rep.V.swap(Vn);
    ++rep.sweeps;
    if (delta <= tol) break;
    if (rep.sweeps >= max_sweeps)
      fail(ErrorCode::convergence, "joint value iteration did not converge");
  }
  rep.joint_action.assign(n, 0);
  for (int s = 0; s < n; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < nj; ++j) {
      double q = backup(rep.V, s, j);
      if (j == 0 || q > best + 1e-12 * std::max(1.0, std::abs(best))) {
        best = q;
        rep.joint_action[s] = j;
      }
    }
  }
  rep.J = evaluate(game, deterministic_joint_policy(game, rep.joint_action)).J;
  return rep;
}

double estimator_identity_lhs(const CooperativeMarkovGame& game, const JointPolicy& policy,
                              const ValueProfile& profile, int s,
                              std::span<const int> prefix_agents,
                              const JointPolicy& prefix_policies, int agent,
                              const TabularPolicy& pi_hat) {
  // Enumerate a^{prefix} and a^{agent} explicitly through multiagent_adv.
  std::vector<int> given(prefix_agents.begin(), prefix_agents.end());
  std::vector<int> given_actions(given.size(), 0);
  const int na = game.n_actions(agent);
  double total = 0.0;
  int n_prefix_joint = 1;
  for (int i : given) n_prefix_joint *= game.n_actions(i);
  for (int idx = 0; idx < n_prefix_joint; ++idx) {
    int rem = idx;
    double w = 1.0;
    for (int k = static_cast<int>(given.size()) - 1; k >= 0; --k) {
      given_actions[k] = rem % game.n_actions(given[k]);
      rem /= game.n_actions(given[k]);
      w *= prefix_policies[given[k]](s, given_actions[k]);
    }
    if (w == 0.0) continue;
    for (int a = 0; a < na; ++a) {
      double wh = pi_hat(s, a);
      if (wh == 0.0) continue;
      int of_agent[1] = {agent};
      int of_action[1] = {a};
      total += w * wh *
               multiagent_adv(game, policy, profile, s, given, given_actions, of_agent, of_action);
    }
  }
  return total;
}

double estimator_identity_rhs(const CooperativeMarkovGame& game, const JointPolicy& policy,
                              const ValueProfile& profile, int s,
                              std::span<const int> prefix_agents,
                              const JointPolicy& prefix_policies, int agent,
                              const TabularPolicy& pi_hat) {
  std::vector<double> w;
  joint_probs(game, policy, s, w);
  double total = 0.0;
  for (int j = 0; j < game.n_joint(); ++j) {
    if (w[j] == 0.0) continue;
    int a = game.agent_action(j, agent);
    double ratio = pi_hat(s, a) / policy[agent](s, a) - 1.0;
    double prefix_ratio = 1.0;
    for (int i : prefix_agents) {
      int ai = game.agent_action(j, i);
      prefix_ratio *= prefix_policies[i](s, ai) / policy[i](s, ai);
    }
    total += w[j] * ratio * prefix_ratio * profile.advantage(s, j);
  }
  return total;
}

}  // namespace harl
