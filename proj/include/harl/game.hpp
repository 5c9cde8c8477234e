#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "harl/common.hpp"

namespace harl {

// Finite cooperative Markov game <N, S, A, r, P, gamma, d>.
//
// Joint actions are flattened in row-major agent order: agent 0 is the most
// significant digit. Transitions are stored as a CSR matrix with one row per
// (state, joint action) pair.
class CooperativeMarkovGame {
 public:
  CooperativeMarkovGame() = default;

  // Builds from dense tables: reward[s][a], transition[s][a][s'].
  CooperativeMarkovGame(int n_agents, int n_states, std::vector<int> n_actions,
                        double gamma,
                        const std::vector<std::vector<double>>& reward,
                        const std::vector<std::vector<std::vector<double>>>& transition,
                        std::vector<double> initial_dist);

  struct SparseRow {
    std::vector<int> next;
    std::vector<double> prob;
  };
  // Builds from per-(s, a) sparse rows; rows.size() == n_states * n_joint.
  CooperativeMarkovGame(int n_agents, int n_states, std::vector<int> n_actions,
                        double gamma, std::vector<double> reward,
                        const std::vector<SparseRow>& rows,
                        std::vector<double> initial_dist);

  int n_agents() const { return n_agents_; }
  int n_states() const { return n_states_; }
  int n_joint() const { return n_joint_; }
  int n_actions(int agent) const { return n_actions_[agent]; }
  const std::vector<int>& action_counts() const { return n_actions_; }
  double gamma() const { return gamma_; }
  const std::vector<double>& initial_dist() const { return initial_dist_; }

  double reward(int s, int joint) const { return reward_[s * n_joint_ + joint]; }

  // Successor states and probabilities for (s, joint).
  std::span<const int> next_states(int s, int joint) const;
  std::span<const double> next_probs(int s, int joint) const;
  double transition(int s, int joint, int next) const;

  int joint_index(std::span<const int> actions) const;
  void decode_joint(int joint, std::span<int> actions) const;
  std::vector<int> decode_joint(int joint) const;
  // Action of `agent` inside the flattened joint index.
  int agent_action(int joint, int agent) const {
    return (joint / stride_[agent]) % n_actions_[agent];
  }
  int stride(int agent) const { return stride_[agent]; }

  // State that loops onto itself with zero reward under every joint action.
  bool is_absorbing(int s) const { return absorbing_[s]; }

  // Episode truncation used by sampled rollouts; 0 means no limit.
  int episode_limit() const { return episode_limit_; }
  void set_episode_limit(int limit) { episode_limit_ = limit; }

  // Checks every invariant; throws Error on violation.
  void validate() const;

  bool operator==(const CooperativeMarkovGame&) const = default;

 private:
  void finish_construction();

  int n_agents_ = 0;
  int n_states_ = 0;
  int n_joint_ = 0;
  std::vector<int> n_actions_;
  std::vector<int> stride_;
  double gamma_ = 0.0;
  std::vector<double> reward_;
  std::vector<std::int64_t> row_ptr_;
  std::vector<int> col_;
  std::vector<double> val_;
  std::vector<double> initial_dist_;
  std::vector<char> absorbing_;
  int episode_limit_ = 0;
};

CooperativeMarkovGame make_matrix_game_example2();
CooperativeMarkovGame make_xor_team_game(int n);
CooperativeMarkovGame make_random_game(int n, int n_states,
                                       const std::vector<int>& n_actions,
                                       double gamma, std::uint64_t seed);
// Single-state game whose every joint action pays `value`.
CooperativeMarkovGame make_constant_game(int n, int n_actions, double value);

struct GridRendezvousOptions {
  int side = 3;
  int n_agents = 2;
  int horizon = 20;
  double gamma = 0.95;
  // Agent 0 may only move along rows, agent 2 only along columns; agent 1
  // keeps all five moves.
  bool asymmetric_roles = false;
  int max_states = 20000;
};

// Agents on a side x side grid, actions {stay, N, S, E, W}. Per-step reward
// is minus the sum of pairwise Manhattan distances divided by its maximum.
// Joint positions where every agent shares a cell are absorbing.
CooperativeMarkovGame make_grid_rendezvous(const GridRendezvousOptions& options);

// Single-step two-agent game on real actions.
struct ContinuousTwoAgentGame {
  std::function<double(double, double)> reward_fn;
  int horizon = 1;
  double reward(double a1, double a2) const { return reward_fn(a1, a2); }
};

ContinuousTwoAgentGame make_diff_game();

// Two agents with bounded scalar actions in [-1, 1] must jointly hit a
// context-dependent target sum while staying balanced:
//   r(c, a) = -(a1 + a2 - target_c)^2 - balance * (a1 - a2)^2.
// Contexts are drawn uniformly and independently each step, so the optimum is
// a1 = a2 = target_c / 2 with reward 0 at every step.
struct TargetMatchingGame {
  std::vector<double> targets{-1.2, -0.4, 0.4, 1.2};
  double balance = 0.25;
  int horizon = 5;
  double gamma = 0.9;
  double low = -1.0;
  double high = 1.0;

  int n_contexts() const { return static_cast<int>(targets.size()); }
  double reward(int context, double a1, double a2) const;
  double optimal_action(int context) const { return targets[context] / 2.0; }
  // Undiscounted episode return of the optimal joint policy.
  double optimal_return() const { return 0.0; }
};

}  // namespace harl
