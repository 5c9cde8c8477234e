#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "harl/env.hpp"
#include "harl/nn.hpp"
#include "harl/oracle.hpp"
#include "json.hpp"

namespace harl {

enum class UpdateScheme { sequential_random, sequential_fixed, simultaneous, shared };

UpdateScheme scheme_from_name(const std::string& name);
std::string scheme_name(UpdateScheme scheme);

struct TrainConfig {
  std::string algorithm = "happo";  // happo, hatrpo, haa2c
  UpdateScheme scheme = UpdateScheme::sequential_random;
  int n_rollout_threads = 20;
  int episode_length = 200;  // steps per thread per round
  long num_env_steps = 1000000;
  int ppo_epoch = 5;
  int a2c_epoch = 5;
  int critic_epoch = 5;
  int actor_num_mini_batch = 1;
  int critic_num_mini_batch = 1;
  double clip_param = 0.2;
  double entropy_coef = 0.01;
  double gamma = -1.0;  // negative: take the environment's discount
  double gae_lambda = 0.95;
  double max_grad_norm = 10.0;
  double kl_threshold = 0.005;
  double backtrack_coeff = 0.8;
  double accept_ratio = 0.5;
  int ls_step = 10;
  int cg_iters = 10;
  double cg_tol = 1e-8;  // relative residual
  double fvp_damping = 0.01;  // CG solves (H + damping I) x = g
  double lr = 5e-4;
  double critic_lr = 5e-4;
  double opti_eps = 1e-5;
  bool use_huber_loss = true;
  double huber_delta = 10.0;
  bool advantage_norm = true;
  std::vector<int> hidden_sizes{128, 128};
  std::vector<int> critic_hidden_sizes{128, 128};
  std::string activation = "relu";
  double gain = 0.01;
  double std_init = 0.5;  // initial Gaussian std
  int log_interval = 1;   // rounds between CSV rows

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& doc);
nlohmann::json train_config_to_json(const TrainConfig& config);

// Categorical or diagonal Gaussian actor behind one interface. Actions are
// stored column-wise: one row for a categorical head, act_dim rows otherwise.
class Actor {
 public:
  Actor() = default;
  explicit Actor(CategoricalPolicy p) : head_(std::move(p)) {}
  explicit Actor(DiagGaussianPolicy p) : head_(std::move(p)) {}

  bool categorical() const { return std::holds_alternative<CategoricalPolicy>(head_); }
  int n_params() const;
  int action_rows() const;
  Vec get_params() const;
  void set_params(const Vec& p);

  Vec log_prob(const Mat& obs, const Mat& actions) const;
  Vec grad_log_prob(const Mat& obs, const Mat& actions, const Vec& weights) const;
  double entropy(const Mat& obs, Vec* grad) const;
  // Mean KL(old || this) over the batch.
  double mean_kl(const Actor& old, const Mat& obs) const;
  Vec fisher_vector_product(const Mat& obs, const Vec& v) const;
  // Samples one action per column of obs. Environment-ready values go to
  // env_actions (squashed for Gaussian heads).
  void sample(const Mat& obs, Rng& rng, Mat& actions, Vec& log_probs, Mat& env_actions) const;

  const CategoricalPolicy& as_categorical() const { return std::get<CategoricalPolicy>(head_); }
  const DiagGaussianPolicy& as_gaussian() const { return std::get<DiagGaussianPolicy>(head_); }
  CheckpointBlock checkpoint_block(const std::string& name) const;

 private:
  std::variant<CategoricalPolicy, DiagGaussianPolicy> head_;
};

struct RolloutBatch {
  int n_threads = 0;
  int length = 0;                   // steps per thread
  Mat obs;                          // obs_dim x (length * n_threads), column t * n_threads + e
  Mat next_obs;                     // observation after the step, before any reset
  std::vector<Mat> actions;         // per agent
  std::vector<Vec> old_log_probs;   // per agent
  Vec rewards;
  std::vector<char> terminal;
  std::vector<char> truncated;
  Vec values;       // V(obs)
  Vec next_values;  // V(next_obs)
  Vec advantages;
  Vec returns;
  std::vector<double> episode_returns;  // completed this round

  int size() const { return n_threads * length; }
};

// Lock-step collection over the thread environments. Episodes continue
// across calls; `episode_acc` carries the running undiscounted returns.
RolloutBatch collect(std::vector<std::unique_ptr<Environment>>& envs,
                     const std::vector<const Actor*>& actors, const Mlp& critic, int steps,
                     Rng& rng, std::vector<double>& episode_acc);

// Single-trajectory GAE: values has one more entry than rewards (the
// bootstrap value, 0 when terminal).
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        double gamma, double lambda);
// Batched GAE over a RolloutBatch; fills advantages and returns.
void compute_gae(RolloutBatch& batch, double gamma, double lambda);

// Per-sample clip objective term min(r M, clip(r, 1 +- eps) M).
double clip_term(double ratio, double m, double eps);

struct AgentUpdateStats {
  int agent = -1;
  double kl_mean = 0.0;
  double surrogate = 0.0;
  double clip_frac = 0.0;
  // HATRPO only.
  bool accepted = false;
  int ls_index = -1;
  double improvement = 0.0;
  double expected = 0.0;  // beta x . g
  double cg_residual = 0.0;
  double time_ms = 0.0;
};

// Samples an actor update consumes. weights holds M.
struct ActorData {
  Mat obs;
  Mat actions;
  Vec old_log_probs;
};

AgentUpdateStats happo_agent_update(Actor& actor, const ActorData& data, const Vec& M,
                                    const TrainConfig& config, AdamState& opt, Rng& rng);
AgentUpdateStats hatrpo_agent_update(Actor& actor, const ActorData& data, const Vec& M,
                                     const TrainConfig& config);
AgentUpdateStats haa2c_agent_update(Actor& actor, const ActorData& data, const Vec& M,
                                    const TrainConfig& config, AdamState& opt, Rng& rng);

// Conjugate gradient for H x = g with H given by `hvp`. Returns the relative
// residual ||H x - g|| / ||g|| through `residual`.
Vec conjugate_gradient(const std::function<Vec(const Vec&)>& hvp, const Vec& g, int max_iters,
                       double tol, double* residual = nullptr);

// Huber regression of the critic onto batch.returns. Returns the mean loss
// before the first step.
double critic_update(Mlp& critic, const RolloutBatch& batch, const TrainConfig& config,
                     AdamState& opt, Rng& rng);

struct CurveRow {
  int round = 0;
  long env_steps = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  int agent = 0;
  double kl_mean = 0.0;
  double surrogate = 0.0;
  double clip_frac = 0.0;
};

std::string curve_header();
std::string curve_row_csv(const CurveRow& row);

struct TrainResult {
  std::vector<CurveRow> curve;
  std::vector<AgentUpdateStats> updates;          // every agent update, in order
  std::vector<std::vector<double>> update_ms;     // [round][agent]
  std::vector<Actor> actors;                      // one per agent, or one when shared
  Mlp critic;
  double final_return_mean = 0.0;
  // Tabular environments only.
  std::optional<JointPolicy> policy;
  double exact_J = 0.0;
  double greedy_J = 0.0;
  long env_steps = 0;
};

// Runs the on-policy loop. The M product after every round equals the
// normalized advantage times the ratio product of all agents; the check is
// exposed through `last_m_error`.
class OnPolicyTrainer {
 public:
  OnPolicyTrainer(const Environment& env, const TrainConfig& config, std::uint64_t seed);

  // One collect / update / critic round. Returns the CSV rows of the round.
  std::vector<CurveRow> round();
  TrainResult run();

  const std::vector<Actor>& actors() const { return actors_; }
  const Mlp& critic() const { return critic_; }
  const RolloutBatch& last_batch() const { return batch_; }
  const std::vector<AgentUpdateStats>& last_updates() const { return last_updates_; }
  const std::vector<int>& last_order() const { return last_order_; }
  double last_m_error() const { return last_m_error_; }
  long env_steps() const { return env_steps_; }
  const Actor& actor_for(int agent) const;

  // Per-state policy of a tabular environment; greedy takes the argmax.
  JointPolicy tabular_policy(const CooperativeMarkovGame& game, bool greedy = false) const;

 private:
  TrainConfig config_;
  int n_agents_ = 0;
  double gamma_ = 0.0;
  std::vector<std::unique_ptr<Environment>> envs_;
  std::vector<Actor> actors_;
  std::vector<AdamState> actor_opt_;
  Mlp critic_;
  AdamState critic_opt_;
  Rng rng_;
  Rng perm_rng_;
  std::vector<double> episode_acc_;
  std::vector<double> last_returns_;
  double return_mean_ = 0.0;
  double return_std_ = 0.0;
  RolloutBatch batch_;
  std::vector<AgentUpdateStats> last_updates_;
  std::vector<int> last_order_;
  double last_m_error_ = 0.0;
  long env_steps_ = 0;
  int round_ = 0;
  std::vector<std::vector<double>> update_ms_;
  std::vector<AgentUpdateStats> all_updates_;
};

}  // namespace harl
