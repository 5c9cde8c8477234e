#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "harl/env.hpp"
#include "harl/nn.hpp"
#include "harl/onpolicy.hpp"
#include "json.hpp"

namespace harl {

struct OffPolicyConfig {
  std::string algorithm = "haddpg";  // haddpg, hatd3, had3qn, maddpg
  // sequential_random or sequential_fixed; maddpg ignores it.
  UpdateScheme scheme = UpdateScheme::sequential_random;
  int n_rollout_threads = 20;
  long num_env_steps = 1000000;
  long warmup_steps = 10000;
  long buffer_size = 1000000;
  int batch_size = 1000;
  int train_interval = 50;        // vector steps between training phases
  double update_per_train = 1.0;  // updates per vector step
  int n_step = 1;
  double gamma = -1.0;  // negative: the environment's discount
  double polyak = 0.005;
  double lr = 5e-4;         // actors and per-agent Q nets
  double critic_lr = 1e-3;
  double opti_eps = 1e-5;
  double exploration_noise = 0.1;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  int policy_delay = 2;
  double epsilon = 0.05;
  std::vector<int> hidden_sizes{128, 128};
  std::vector<int> critic_hidden_sizes{128, 128};
  std::vector<int> dueling_v_hidden_sizes{128};
  std::vector<int> dueling_a_hidden_sizes{128};
  std::string activation = "relu";
  double max_grad_norm = 0.0;  // 0 disables clipping
  long log_interval = 10000;   // env steps between CSV rows

  void validate() const;
};

OffPolicyConfig offpolicy_config_from_json(const nlohmann::json& doc);
nlohmann::json offpolicy_config_to_json(const OffPolicyConfig& config);
bool is_offpolicy_algorithm(const std::string& name);

struct Transition {
  Vec obs;
  Vec action;  // flat joint action
  double reward = 0.0;
  Vec next_obs;
  double discount = 0.0;  // gamma^k, or 0 when the episode terminated
};

// Ring buffer with uniform sampling.
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int obs_dim, int action_dim);

  void push(const Transition& t);
  long size() const { return size_; }
  long capacity() const { return capacity_; }

  struct Batch {
    Mat obs;
    Mat actions;
    Vec rewards;
    Mat next_obs;
    Vec discounts;
  };
  Batch sample(int n, Rng& rng) const;
  Transition at(long i) const;

 private:
  long capacity_;
  long size_ = 0;
  long next_ = 0;
  Mat obs_;
  Mat actions_;
  Vec rewards_;
  Mat next_obs_;
  Vec discounts_;
};

// Folds one thread's steps into n-step transitions. Steps inside an episode
// are emitted once n of them are pending; the episode end flushes the rest.
class NStepAccumulator {
 public:
  NStepAccumulator(int n, double gamma) : n_(n), gamma_(gamma) {}

  // Returns the transitions completed by this step.
  std::vector<Transition> add(const Vec& obs, const Vec& action, double reward,
                              const Vec& next_obs, bool terminal, bool truncated);

 private:
  struct Pending {
    Vec obs;
    Vec action;
    double reward;
  };
  Transition fold(std::size_t first, const Vec& next_obs, bool terminal) const;

  int n_;
  double gamma_;
  std::deque<Pending> pending_;
};

// theta_hat <- tau * theta + (1 - tau) * theta_hat.
void polyak_update(Vec& target, const Vec& source, double tau);

// Clipped Gaussian draw used for target policy smoothing.
double smoothing_noise(double sigma, double clip, Rng& rng);

// TD3 target r + discount * min(q1, q2).
double twin_target(double reward, double discount, double q1, double q2);

struct OffPolicyUpdateStats {
  double critic_loss = 0.0;
  double q_mean = 0.0;
  std::vector<double> actor_objective;  // per agent; mean Q or local TD loss
  bool actors_updated = false;
  std::vector<int> order;
  std::vector<double> agent_ms;  // per agent
};

struct OffCurveRow {
  CurveRow base;
  double critic_loss = 0.0;
  double q_mean = 0.0;
};

std::string off_curve_header();
std::string off_curve_row_csv(const OffCurveRow& row);

struct OffTrainResult {
  std::vector<OffCurveRow> curve;
  std::vector<std::vector<double>> update_ms;  // per training phase, per agent
  double final_return_mean = 0.0;
  long env_steps = 0;
  // Exact evaluation of the greedy joint policy where available.
  bool has_exact = false;
  double exact_return = 0.0;
  std::optional<JointPolicy> policy;
};

// Deterministic-policy learners (HADDPG, HATD3, MADDPG) and HAD3QN.
class OffPolicyTrainer {
 public:
  OffPolicyTrainer(const Environment& env, const OffPolicyConfig& config, std::uint64_t seed);

  // Pushes one vector step of experience.
  void collect_step();
  // One gradient round on a sampled batch.
  OffPolicyUpdateStats update();
  OffTrainResult run();

  // Actions the agents take at obs (greedy, no exploration), flat per column.
  Mat greedy_actions(const Mat& obs) const;
  // Undiscounted return of the greedy policy on target matching, averaged
  // exactly over contexts.
  double target_matching_return(const TargetMatchingEnv& env) const;
  JointPolicy tabular_policy(const CooperativeMarkovGame& game) const;

  const ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<DeterministicPolicy>& actors() const { return actors_; }
  std::vector<DeterministicPolicy>& mutable_actors() { return actors_; }
  const std::vector<Mlp>& critics() const { return critics_; }
  std::vector<Mlp>& mutable_critics() { return critics_; }
  const std::vector<DuelingNet>& q_nets() const { return q_nets_; }
  const DuelingNet& global_q() const { return global_q_; }
  long env_steps() const { return env_steps_; }
  long updates() const { return n_updates_; }
  std::vector<CheckpointBlock> checkpoint_blocks() const;

  // Critic inputs [obs; a^0; ...; a^{n-1}] for the actor step of `agent`,
  // given the update order and which agents already moved. Exposed to check
  // the sequential input assembly.
  Mat actor_critic_input(const Mat& obs, const std::vector<int>& order, int position,
                         const std::vector<DeterministicPolicy>& old_actors) const;

 private:
  OffPolicyUpdateStats update_deterministic(const ReplayBuffer::Batch& b);
  OffPolicyUpdateStats update_d3qn(const ReplayBuffer::Batch& b);
  Vec explore(int agent, const Vec& mean, Rng& rng) const;
  int joint_index(const Mat& actions, Eigen::Index col) const;

  OffPolicyConfig config_;
  int n_agents_ = 0;
  int obs_dim_ = 0;
  bool discrete_ = false;
  std::vector<int> act_dims_;   // per agent
  std::vector<int> n_actions_;  // discrete
  std::vector<int> stride_;
  int n_joint_ = 0;
  double gamma_ = 0.0;
  double low_ = -1.0;
  double high_ = 1.0;

  std::vector<std::unique_ptr<Environment>> envs_;
  std::vector<NStepAccumulator> nstep_;
  ReplayBuffer buffer_;
  Rng rng_;
  Rng perm_rng_;

  std::vector<DeterministicPolicy> actors_, target_actors_;
  std::vector<AdamState> actor_opt_;
  std::vector<Mlp> critics_, target_critics_;  // one, or two for hatd3
  std::vector<AdamState> critic_opt_;
  std::vector<DuelingNet> q_nets_, target_q_nets_;
  std::vector<AdamState> q_opt_;
  DuelingNet global_q_, target_global_q_;
  AdamState global_opt_;

  std::vector<double> episode_acc_;
  std::vector<double> recent_returns_;
  long env_steps_ = 0;
  long n_updates_ = 0;
};

}  // namespace harl
