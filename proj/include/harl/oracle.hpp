#pragma once

#include <span>
#include <vector>

#include "harl/game.hpp"

namespace harl {

// Per-agent tabular policy pi^i[s] -> distribution over A^i, stored row-major.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(int n_states, int n_actions);  // uniform
  TabularPolicy(int n_states, int n_actions, std::vector<double> prob);

  static TabularPolicy uniform(int n_states, int n_actions) { return {n_states, n_actions}; }
  static TabularPolicy deterministic(int n_states, int n_actions, const std::vector<int>& action);
  static TabularPolicy random(int n_states, int n_actions, Rng& rng);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double operator()(int s, int a) const { return prob_[s * n_actions_ + a]; }
  double& at(int s, int a) { return prob_[s * n_actions_ + a]; }
  std::span<const double> row(int s) const {
    return {prob_.data() + s * n_actions_, static_cast<std::size_t>(n_actions_)};
  }
  std::span<double> row(int s) {
    return {prob_.data() + s * n_actions_, static_cast<std::size_t>(n_actions_)};
  }
  const std::vector<double>& data() const { return prob_; }

  void validate() const;
  bool operator==(const TabularPolicy&) const = default;

 private:
  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<double> prob_;
};

using JointPolicy = std::vector<TabularPolicy>;

JointPolicy uniform_joint_policy(const CooperativeMarkovGame& game);
JointPolicy random_joint_policy(const CooperativeMarkovGame& game, Rng& rng);
JointPolicy deterministic_joint_policy(const CooperativeMarkovGame& game,
                                       const std::vector<int>& joint_action_per_state);
void check_policy(const CooperativeMarkovGame& game, const JointPolicy& policy);

// pi(joint | s) for every joint action.
void joint_probs(const CooperativeMarkovGame& game, const JointPolicy& policy, int s,
                 std::vector<double>& out);

struct ValueProfile {
  int n_states = 0;
  int n_joint = 0;
  std::vector<double> V;
  std::vector<double> Q;  // s * n_joint + joint
  // Improper visitation: total mass 1 / (1 - gamma).
  std::vector<double> rho;
  double J = 0.0;

  double q(int s, int joint) const { return Q[s * n_joint + joint]; }
  double advantage(int s, int joint) const { return q(s, joint) - V[s]; }
};

ValueProfile evaluate(const CooperativeMarkovGame& game, const JointPolicy& policy);

// Q^{agents}(s, actions): complement agents marginalized under `policy`.
// Empty `agents` gives V(s); all agents gives Q(s, a).
double multiagent_q(const CooperativeMarkovGame& game, const JointPolicy& policy,
                    const ValueProfile& profile, int s, std::span<const int> agents,
                    std::span<const int> actions);

// A^{of}(s, a^{given}, a^{of}) = Q^{given u of} - Q^{given}.
double multiagent_adv(const CooperativeMarkovGame& game, const JointPolicy& policy,
                      const ValueProfile& profile, int s, std::span<const int> given_agents,
                      std::span<const int> given_actions, std::span<const int> of_agents,
                      std::span<const int> of_actions);

// g(a) = E_{prefix ~ prefix_policies}[A^{agent}(s, a^{prefix}, a)] for every
// action a of `agent`. `prefix_policies` is indexed by agent id like `policy`;
// only the entries of prefix agents are read.
std::vector<double> prefix_advantage(const CooperativeMarkovGame& game,
                                     const JointPolicy& policy, const ValueProfile& profile,
                                     int s, std::span<const int> prefix_agents,
                                     const JointPolicy& prefix_policies, int agent);

// Same as prefix_advantage for all states at once, [s][a].
std::vector<std::vector<double>> prefix_advantage_table(const CooperativeMarkovGame& game,
                                                        const JointPolicy& policy,
                                                        const ValueProfile& profile,
                                                        std::span<const int> prefix_agents,
                                                        const JointPolicy& prefix_policies,
                                                        int agent);

// L = sum_s rho(s) E_{prefix ~ bar, a ~ hat}[A^{agent}(s, a^{prefix}, a)].
double surrogate_L(const CooperativeMarkovGame& game, const JointPolicy& policy,
                   const ValueProfile& profile, std::span<const int> prefix_agents,
                   const JointPolicy& prefix_policies, int agent, const TabularPolicy& pi_hat);

struct BestResponseReport {
  std::vector<double> gaps;
  std::vector<double> best_J;
  std::vector<TabularPolicy> best_response;
  std::vector<int> sweeps;
  double J = 0.0;
};

BestResponseReport best_response_gap(const CooperativeMarkovGame& game,
                                     const JointPolicy& policy, double tol = 1e-12,
                                     long max_sweeps = 1000000);

struct OptimalReport {
  double J = 0.0;
  std::vector<double> V;
  std::vector<int> joint_action;  // greedy joint action per state
  long sweeps = 0;
};

// Team optimum by value iteration over joint actions.
OptimalReport optimal_joint(const CooperativeMarkovGame& game, double tol = 1e-12,
                            long max_sweeps = 1000000);

// Two sides of the joint-advantage estimator identity at state s. The left
// side enumerates the multi-agent advantage, the right side reweights the
// joint advantage under pi, so the prefix agents and `agent` need full
// support under `policy`.
double estimator_identity_lhs(const CooperativeMarkovGame& game, const JointPolicy& policy,
                              const ValueProfile& profile, int s,
                              std::span<const int> prefix_agents,
                              const JointPolicy& prefix_policies, int agent,
                              const TabularPolicy& pi_hat);
double estimator_identity_rhs(const CooperativeMarkovGame& game, const JointPolicy& policy,
                              const ValueProfile& profile, int s,
                              std::span<const int> prefix_agents,
                              const JointPolicy& prefix_policies, int agent,
                              const TabularPolicy& pi_hat);

}  // namespace harl
