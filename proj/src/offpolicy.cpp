#include "harl/offpolicy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "harl/json_io.hpp"

namespace harl {

using nlohmann::json;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

CheckpointBlock mlp_block(const std::string& name, const Mlp& net) {
  CheckpointBlock b;
  b.name = name;
  b.widths = net.widths();
  b.hidden_activation = activation_name(net.hidden_activation());
  b.output_activation = activation_name(net.output_activation());
  b.params = net.params();
  return b;
}

int argmax_col(const Mat& q, Eigen::Index col) {
  Eigen::Index best = 0;
  q.col(col).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

bool is_offpolicy_algorithm(const std::string& name) {
  return name == "haddpg" || name == "hatd3" || name == "had3qn" || name == "maddpg";
}

void OffPolicyConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::config, m); };
  if (!is_offpolicy_algorithm(algorithm)) bad("unknown off-policy algorithm '" + algorithm + "'");
  if (scheme != UpdateScheme::sequential_random && scheme != UpdateScheme::sequential_fixed)
    bad("off-policy scheme must be sequential_random or sequential_fixed");
  if (n_rollout_threads < 1) bad("n_rollout_threads must be positive");
  if (num_env_steps < 1) bad("num_env_steps must be positive");
  if (warmup_steps < 0) bad("warmup_steps must be nonnegative");
  if (buffer_size < 1 || batch_size < 1) bad("buffer and batch sizes must be positive");
  if (train_interval < 1 || !(update_per_train > 0.0)) bad("training schedule must be positive");
  if (n_step < 1) bad("n_step must be positive");
  if (gamma >= 1.0) bad("gamma must be below 1");
  if (!(polyak > 0.0 && polyak <= 1.0)) bad("polyak must lie in (0, 1]");
  if (!(lr > 0.0) || !(critic_lr > 0.0) || !(opti_eps > 0.0)) bad("learning rates must be positive");
  if (exploration_noise < 0.0 || policy_noise < 0.0 || noise_clip < 0.0)
    bad("noise scales must be nonnegative");
  if (policy_delay < 1) bad("policy_delay must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) bad("epsilon must lie in [0, 1]");
  if (max_grad_norm < 0.0) bad("max_grad_norm must be nonnegative");
  if (log_interval < 1) bad("log_interval must be positive");
  for (const auto* hs : {&hidden_sizes, &critic_hidden_sizes, &dueling_v_hidden_sizes,
                         &dueling_a_hidden_sizes})
    for (int h : *hs)
      if (h < 1) bad("hidden sizes must be positive");
  activation_from_name(activation);
}

OffPolicyConfig offpolicy_config_from_json(const json& doc) {
  reject_unknown_keys(doc,
                      {"algorithm", "scheme", "n_rollout_threads", "num_env_steps",
                       "warmup_steps", "buffer_size", "batch_size", "train_interval",
                       "update_per_train", "n_step", "gamma", "polyak", "lr", "critic_lr",
                       "opti_eps", "exploration_noise", "policy_noise", "noise_clip",
                       "policy_delay", "epsilon", "hidden_sizes", "critic_hidden_sizes",
                       "dueling_v_hidden_sizes", "dueling_a_hidden_sizes", "activation",
                       "max_grad_norm", "log_interval"},
                      "train");
  OffPolicyConfig c;
  c.algorithm = json_value(doc, "algorithm", c.algorithm);
  c.scheme = scheme_from_name(json_value(doc, "scheme", scheme_name(c.scheme)));
  c.n_rollout_threads = json_value(doc, "n_rollout_threads", c.n_rollout_threads);
  c.num_env_steps = json_value(doc, "num_env_steps", c.num_env_steps);
  c.warmup_steps = json_value(doc, "warmup_steps", c.warmup_steps);
  c.buffer_size = json_value(doc, "buffer_size", c.buffer_size);
  c.batch_size = json_value(doc, "batch_size", c.batch_size);
  c.train_interval = json_value(doc, "train_interval", c.train_interval);
  c.update_per_train = json_value(doc, "update_per_train", c.update_per_train);
  c.n_step = json_value(doc, "n_step", c.n_step);
  c.gamma = json_value(doc, "gamma", c.gamma);
  c.polyak = json_value(doc, "polyak", c.polyak);
  c.lr = json_value(doc, "lr", c.lr);
  c.critic_lr = json_value(doc, "critic_lr", c.critic_lr);
  c.opti_eps = json_value(doc, "opti_eps", c.opti_eps);
  c.exploration_noise = json_value(doc, "exploration_noise", c.exploration_noise);
  c.policy_noise = json_value(doc, "policy_noise", c.policy_noise);
  c.noise_clip = json_value(doc, "noise_clip", c.noise_clip);
  c.policy_delay = json_value(doc, "policy_delay", c.policy_delay);
  c.epsilon = json_value(doc, "epsilon", c.epsilon);
  c.hidden_sizes = json_value(doc, "hidden_sizes", c.hidden_sizes);
  c.critic_hidden_sizes = json_value(doc, "critic_hidden_sizes", c.critic_hidden_sizes);
  c.dueling_v_hidden_sizes = json_value(doc, "dueling_v_hidden_sizes", c.dueling_v_hidden_sizes);
  c.dueling_a_hidden_sizes = json_value(doc, "dueling_a_hidden_sizes", c.dueling_a_hidden_sizes);
  c.activation = json_value(doc, "activation", c.activation);
  c.max_grad_norm = json_value(doc, "max_grad_norm", c.max_grad_norm);
  c.log_interval = json_value(doc, "log_interval", c.log_interval);
  c.validate();
  return c;
}

json offpolicy_config_to_json(const OffPolicyConfig& c) {
  return json{{"algorithm", c.algorithm},
              {"scheme", scheme_name(c.scheme)},
              {"n_rollout_threads", c.n_rollout_threads},
              {"num_env_steps", c.num_env_steps},
              {"warmup_steps", c.warmup_steps},
              {"buffer_size", c.buffer_size},
              {"batch_size", c.batch_size},
              {"train_interval", c.train_interval},
              {"update_per_train", c.update_per_train},
              {"n_step", c.n_step},
              {"gamma", c.gamma},
              {"polyak", c.polyak},
              {"lr", c.lr},
              {"critic_lr", c.critic_lr},
              {"opti_eps", c.opti_eps},
              {"exploration_noise", c.exploration_noise},
              {"policy_noise", c.policy_noise},
              {"noise_clip", c.noise_clip},
              {"policy_delay", c.policy_delay},
              {"epsilon", c.epsilon},
              {"hidden_sizes", c.hidden_sizes},
              {"critic_hidden_sizes", c.critic_hidden_sizes},
              {"dueling_v_hidden_sizes", c.dueling_v_hidden_sizes},
              {"dueling_a_hidden_sizes", c.dueling_a_hidden_sizes},
              {"activation", c.activation},
              {"max_grad_norm", c.max_grad_norm},
              {"log_interval", c.log_interval}};
}

// ---- replay ----

ReplayBuffer::ReplayBuffer(long capacity, int obs_dim, int action_dim)
    : capacity_(capacity),
      obs_(obs_dim, 0),
      actions_(action_dim, 0),
      rewards_(0),
      next_obs_(obs_dim, 0),
      discounts_(0) {
  require(capacity >= 1, "replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  require(t.obs.size() == obs_.rows() && t.next_obs.size() == obs_.rows() &&
              t.action.size() == actions_.rows(),
          "transition shape mismatch");
  if (next_ >= obs_.cols()) {
    // Storage grows geometrically up to the capacity.
    long cols = std::min(capacity_, std::max<long>(1024, 2 * obs_.cols()));
    obs_.conservativeResize(Eigen::NoChange, cols);
    actions_.conservativeResize(Eigen::NoChange, cols);
    rewards_.conservativeResize(cols);
    next_obs_.conservativeResize(Eigen::NoChange, cols);
    discounts_.conservativeResize(cols);
  }
  obs_.col(next_) = t.obs;
  actions_.col(next_) = t.action;
  rewards_[next_] = t.reward;
  next_obs_.col(next_) = t.next_obs;
  discounts_[next_] = t.discount;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(long i) const {
  require(i >= 0 && i < size_, "replay index out of range");
  long k = size_ < capacity_ ? i : (next_ + i) % capacity_;
  return Transition{obs_.col(k), actions_.col(k), rewards_[k], next_obs_.col(k), discounts_[k]};
}

ReplayBuffer::Batch ReplayBuffer::sample(int n, Rng& rng) const {
  require(size_ >= 1, "cannot sample an empty buffer");
  Batch b;
  b.obs.resize(obs_.rows(), n);
  b.actions.resize(actions_.rows(), n);
  b.rewards.resize(n);
  b.next_obs.resize(obs_.rows(), n);
  b.discounts.resize(n);
  std::uniform_int_distribution<long> pick(0, size_ - 1);
  for (int j = 0; j < n; ++j) {
    long k = pick(rng);
    b.obs.col(j) = obs_.col(k);
    b.actions.col(j) = actions_.col(k);
    b.rewards[j] = rewards_[k];
    b.next_obs.col(j) = next_obs_.col(k);
    b.discounts[j] = discounts_[k];
  }
  return b;
}

Transition NStepAccumulator::fold(std::size_t first, const Vec& next_obs, bool terminal) const {
  Transition t;
  t.obs = pending_[first].obs;
  t.action = pending_[first].action;
  double g = 1.0;
  for (std::size_t k = first; k < pending_.size(); ++k) {
    t.reward += g * pending_[k].reward;
    g *= gamma_;
  }
  t.next_obs = next_obs;
  t.discount = terminal ? 0.0 : g;
  return t;
}

std::vector<Transition> NStepAccumulator::add(const Vec& obs, const Vec& action, double reward,
                                              const Vec& next_obs, bool terminal,
                                              bool truncated) {
  pending_.push_back(Pending{obs, action, reward});
  std::vector<Transition> out;
  if (terminal || truncated) {
    for (std::size_t k = 0; k < pending_.size(); ++k) out.push_back(fold(k, next_obs, terminal));
    pending_.clear();
  } else if (static_cast<int>(pending_.size()) == n_) {
    out.push_back(fold(0, next_obs, false));
    pending_.pop_front();
  }
  return out;
}

void polyak_update(Vec& target, const Vec& source, double tau) {
  require(target.size() == source.size(), "polyak shape mismatch");
  target = tau * source + (1.0 - tau) * target;
}

double smoothing_noise(double sigma, double clip, Rng& rng) {
  return std::clamp(sigma * normal01(rng), -clip, clip);
}

double twin_target(double reward, double discount, double q1, double q2) {
  return reward + discount * std::min(q1, q2);
}

std::string off_curve_header() { return curve_header() + ",critic_loss,q_mean"; }

std::string off_curve_row_csv(const OffCurveRow& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, ",%.10g,%.10g", r.critic_loss, r.q_mean);
  return curve_row_csv(r.base) + buf;
}

// ---- trainer ----

OffPolicyTrainer::OffPolicyTrainer(const Environment& env, const OffPolicyConfig& config,
                                   std::uint64_t seed)
    : config_(config),
      buffer_(1, 1, 1),
      rng_(mix_seed(seed, 1)),
      perm_rng_(mix_seed(seed, 2)) {
  config_.validate();
  n_agents_ = env.n_agents();
  obs_dim_ = env.obs_dim();
  discrete_ = env.discrete();
  gamma_ = config_.gamma < 0.0 ? env.gamma() : config_.gamma;
  low_ = env.action_low();
  high_ = env.action_high();
  const bool d3qn = config_.algorithm == "had3qn";
  if (d3qn && !discrete_) fail(ErrorCode::config, "had3qn needs discrete action spaces");
  if (!d3qn && discrete_)
    fail(ErrorCode::config, config_.algorithm + " needs continuous action spaces");

  int joint_dim = 0;
  for (int i = 0; i < n_agents_; ++i) {
    act_dims_.push_back(discrete_ ? 1 : env.action_dim(i));
    joint_dim += act_dims_.back();
  }
  if (discrete_) {
    n_joint_ = 1;
    for (int i = 0; i < n_agents_; ++i) n_actions_.push_back(env.n_actions(i));
    stride_.assign(n_agents_, 1);
    for (int i = n_agents_ - 1; i >= 0; --i) {
      stride_[i] = n_joint_;
      n_joint_ *= n_actions_[i];
    }
  }

  for (int e = 0; e < config_.n_rollout_threads; ++e) {
    envs_.push_back(env.clone(mix_seed(seed, 100 + static_cast<std::uint64_t>(e))));
    nstep_.emplace_back(config_.n_step, gamma_);
  }
  episode_acc_.assign(config_.n_rollout_threads, 0.0);
  buffer_ = ReplayBuffer(config_.buffer_size, obs_dim_, joint_dim);

  Rng init(mix_seed(seed, 0));
  const Activation act = activation_from_name(config_.activation);
  if (d3qn) {
    for (int i = 0; i < n_agents_; ++i) {
      q_nets_.emplace_back(obs_dim_, config_.dueling_v_hidden_sizes,
                           config_.dueling_a_hidden_sizes, n_actions_[i], act, init);
      q_opt_.emplace_back(q_nets_.back().n_params(), config_.lr, config_.opti_eps);
    }
    global_q_ = DuelingNet(obs_dim_, config_.critic_hidden_sizes, config_.critic_hidden_sizes,
                           n_joint_, act, init);
    global_opt_ = AdamState(global_q_.n_params(), config_.critic_lr, config_.opti_eps);
    target_q_nets_ = q_nets_;
    target_global_q_ = global_q_;
  } else {
    for (int i = 0; i < n_agents_; ++i) {
      actors_.emplace_back(obs_dim_, config_.hidden_sizes, act_dims_[i], act, 0.01, low_, high_,
                           init);
      actor_opt_.emplace_back(actors_.back().n_params(), config_.lr, config_.opti_eps);
    }
    const int n_critics = config_.algorithm == "hatd3" ? 2 : 1;
    for (int k = 0; k < n_critics; ++k) {
      critics_.emplace_back(with_io(obs_dim_ + joint_dim, config_.critic_hidden_sizes, 1), act,
                            Activation::identity, 1.0, init);
      critic_opt_.emplace_back(critics_.back().n_params(), config_.critic_lr, config_.opti_eps);
    }
    target_actors_ = actors_;
    target_critics_ = critics_;
  }
}

Vec OffPolicyTrainer::explore(int agent, const Vec& mean, Rng& rng) const {
  Vec a = mean;
  for (Eigen::Index k = 0; k < a.size(); ++k)
    a[k] = std::clamp(a[k] + config_.exploration_noise * normal01(rng), low_, high_);
  (void)agent;
  return a;
}

int OffPolicyTrainer::joint_index(const Mat& actions, Eigen::Index col) const {
  int j = 0;
  for (int i = 0; i < n_agents_; ++i) j += static_cast<int>(actions(i, col)) * stride_[i];
  return j;
}

Mat OffPolicyTrainer::greedy_actions(const Mat& obs) const {
  int rows = 0;
  for (int d : act_dims_) rows += d;
  Mat out(rows, obs.cols());
  int r = 0;
  for (int i = 0; i < n_agents_; ++i) {
    if (discrete_) {
      Mat q = q_nets_[i].q_values(obs);
      for (Eigen::Index b = 0; b < obs.cols(); ++b) out(r, b) = argmax_col(q, b);
    } else {
      out.middleRows(r, act_dims_[i]) = actors_[i].act(obs);
    }
    r += act_dims_[i];
  }
  return out;
}

void OffPolicyTrainer::collect_step() {
  const int N = static_cast<int>(envs_.size());
  Mat obs(obs_dim_, N);
  for (int e = 0; e < N; ++e) obs.col(e) = envs_[e]->obs();
  const bool warm = env_steps_ < config_.warmup_steps;
  int rows = 0;
  for (int d : act_dims_) rows += d;
  Mat actions(rows, N);
  if (warm) {
    for (int e = 0; e < N; ++e) {
      int r = 0;
      for (int i = 0; i < n_agents_; ++i) {
        for (int k = 0; k < act_dims_[i]; ++k, ++r) {
          if (discrete_)
            actions(r, e) = std::min(static_cast<int>(uniform01(rng_) * n_actions_[i]),
                                     n_actions_[i] - 1);
          else
            actions(r, e) = low_ + (high_ - low_) * uniform01(rng_);
        }
      }
    }
  } else if (discrete_) {
    actions = greedy_actions(obs);
    for (int e = 0; e < N; ++e)
      for (int i = 0; i < n_agents_; ++i)
        if (uniform01(rng_) < config_.epsilon)
          actions(i, e) = std::min(static_cast<int>(uniform01(rng_) * n_actions_[i]),
                                   n_actions_[i] - 1);
  } else {
    Mat mean = greedy_actions(obs);
    for (int e = 0; e < N; ++e) {
      int r = 0;
      for (int i = 0; i < n_agents_; ++i) {
        actions.block(r, e, act_dims_[i], 1) =
            explore(i, mean.block(r, e, act_dims_[i], 1), rng_);
        r += act_dims_[i];
      }
    }
  }
  for (int e = 0; e < N; ++e) {
    Vec a = actions.col(e);
    StepResult res = envs_[e]->step(std::span<const double>(a.data(), a.size()));
    episode_acc_[e] += res.reward;
    for (auto& t : nstep_[e].add(obs.col(e), a, res.reward, envs_[e]->obs(), res.terminal,
                                 res.truncated))
      buffer_.push(t);
    if (res.terminal || res.truncated) {
      recent_returns_.push_back(episode_acc_[e]);
      episode_acc_[e] = 0.0;
      envs_[e]->reset();
    }
  }
  env_steps_ += N;
}

Mat OffPolicyTrainer::actor_critic_input(const Mat& obs, const std::vector<int>& order,
                                         int position,
                                         const std::vector<DeterministicPolicy>& old_actors) const {
  std::vector<char> moved(n_agents_, 0);
  const bool sequential = config_.algorithm != "maddpg";
  if (sequential)
    for (int m = 0; m < position; ++m) moved[order[m]] = 1;
  moved[order[position]] = 1;
  int rows = obs_dim_;
  for (int d : act_dims_) rows += d;
  Mat in(rows, obs.cols());
  in.topRows(obs_dim_) = obs;
  int r = obs_dim_;
  for (int i = 0; i < n_agents_; ++i) {
    in.middleRows(r, act_dims_[i]) = moved[i] ? actors_[i].act(obs) : old_actors[i].act(obs);
    r += act_dims_[i];
  }
  return in;
}

OffPolicyUpdateStats OffPolicyTrainer::update() {
  auto batch = buffer_.sample(config_.batch_size, rng_);
  ++n_updates_;
  return config_.algorithm == "had3qn" ? update_d3qn(batch) : update_deterministic(batch);
}

OffPolicyUpdateStats OffPolicyTrainer::update_deterministic(const ReplayBuffer::Batch& b) {
  OffPolicyUpdateStats st;
  const Eigen::Index B = b.obs.cols();
  const double inv_b = 1.0 / static_cast<double>(B);
  const bool td3 = config_.algorithm == "hatd3";
  const int joint_dim = static_cast<int>(b.actions.rows());

  // Critic targets.
  Mat next_in(obs_dim_ + joint_dim, B);
  next_in.topRows(obs_dim_) = b.next_obs;
  int r = obs_dim_;
  for (int i = 0; i < n_agents_; ++i) {
    Mat a = target_actors_[i].act(b.next_obs);
    if (td3)
      for (Eigen::Index k = 0; k < a.size(); ++k)
        a.data()[k] = std::clamp(
            a.data()[k] + smoothing_noise(config_.policy_noise, config_.noise_clip, rng_), low_,
            high_);
    next_in.middleRows(r, act_dims_[i]) = a;
    r += act_dims_[i];
  }
  Vec y(B);
  Mat q1 = target_critics_[0].forward(next_in);
  if (td3) {
    Mat q2 = target_critics_[1].forward(next_in);
    for (Eigen::Index j = 0; j < B; ++j)
      y[j] = twin_target(b.rewards[j], b.discounts[j], q1(0, j), q2(0, j));
  } else {
    for (Eigen::Index j = 0; j < B; ++j) y[j] = b.rewards[j] + b.discounts[j] * q1(0, j);
  }

  Mat cur_in(obs_dim_ + joint_dim, B);
  cur_in.topRows(obs_dim_) = b.obs;
  cur_in.bottomRows(joint_dim) = b.actions;
  for (std::size_t k = 0; k < critics_.size(); ++k) {
    Mlp::Cache cache;
    Mat q = critics_[k].forward(cur_in, &cache);
    Mat err = q - y.transpose();
    if (k == 0) st.q_mean = q.mean();
    st.critic_loss += 0.5 * err.squaredNorm() * inv_b / static_cast<double>(critics_.size());
    Vec grad = Vec::Zero(critics_[k].n_params());
    critics_[k].backward(cache, err * inv_b, grad);
    clip_grad_norm(grad, config_.max_grad_norm);
    critic_opt_[k].update(critics_[k].params(), grad);
  }

  st.actor_objective.assign(n_agents_, 0.0);
  st.agent_ms.assign(n_agents_, 0.0);
  const bool actor_round = !td3 || n_updates_ % config_.policy_delay == 0;
  if (!actor_round) return st;
  st.actors_updated = true;

  std::vector<int> order(n_agents_);
  std::iota(order.begin(), order.end(), 0);
  if (config_.algorithm != "maddpg" && config_.scheme == UpdateScheme::sequential_random)
    order = random_permutation(n_agents_, perm_rng_);
  st.order = order;
  const std::vector<DeterministicPolicy> old_actors = actors_;
  std::vector<int> offset(n_agents_, obs_dim_);
  for (int i = 1; i < n_agents_; ++i) offset[i] = offset[i - 1] + act_dims_[i - 1];

  for (int m = 0; m < n_agents_; ++m) {
    const int i = order[m];
    double t0 = now_ms();
    Mat in = actor_critic_input(b.obs, order, m, old_actors);
    Mlp::Cache acache;
    in.middleRows(offset[i], act_dims_[i]) = actors_[i].act(b.obs, &acache);
    Mlp::Cache ccache;
    Mat q = critics_[0].forward(in, &ccache);
    st.actor_objective[i] = q.mean();
    Vec scratch = Vec::Zero(critics_[0].n_params());
    Mat dq = critics_[0].backward(ccache, Mat::Constant(1, B, -inv_b), scratch, true);
    Vec grad = actors_[i].backprop(acache, dq.middleRows(offset[i], act_dims_[i]));
    clip_grad_norm(grad, config_.max_grad_norm);
    actor_opt_[i].update(actors_[i].net().params(), grad);
    st.agent_ms[i] = now_ms() - t0;
  }

  for (int i = 0; i < n_agents_; ++i)
    polyak_update(target_actors_[i].net().params(), actors_[i].net().params(), config_.polyak);
  for (std::size_t k = 0; k < critics_.size(); ++k)
    polyak_update(target_critics_[k].params(), critics_[k].params(), config_.polyak);
  return st;
}

OffPolicyUpdateStats OffPolicyTrainer::update_d3qn(const ReplayBuffer::Batch& b) {
  OffPolicyUpdateStats st;
  const Eigen::Index B = b.obs.cols();

  std::vector<int> joint(B), next_joint(B, 0);
  for (Eigen::Index j = 0; j < B; ++j) joint[j] = joint_index(b.actions, j);
  for (int i = 0; i < n_agents_; ++i) {
    Mat q = target_q_nets_[i].q_values(b.next_obs);
    for (Eigen::Index j = 0; j < B; ++j) next_joint[j] += argmax_col(q, j) * stride_[i];
  }
  Mat qn = target_global_q_.q_values(b.next_obs);
  Vec y(B);
  for (Eigen::Index j = 0; j < B; ++j) y[j] = b.rewards[j] + b.discounts[j] * qn(next_joint[j], j);

  Vec grad = Vec::Zero(global_q_.n_params());
  st.critic_loss = global_q_.td_gradient(b.obs, joint, y, grad);
  clip_grad_norm(grad, config_.max_grad_norm);
  Vec gp = global_q_.get_params();
  global_opt_.update(gp, grad);
  global_q_.set_params(gp);

  Mat q_all = global_q_.q_values(b.obs);
  double qsum = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) qsum += q_all(joint[j], j);
  st.q_mean = qsum / static_cast<double>(B);

  std::vector<int> order(n_agents_);
  std::iota(order.begin(), order.end(), 0);
  if (config_.scheme == UpdateScheme::sequential_random)
    order = random_permutation(n_agents_, perm_rng_);
  st.order = order;
  st.actors_updated = true;
  st.actor_objective.assign(n_agents_, 0.0);
  st.agent_ms.assign(n_agents_, 0.0);

  // Prefix agents switch to their sequential argmax, the rest keep the
  // sampled actions.
  std::vector<int> cur = joint;
  std::vector<int> own(B);
  Vec yi(B);
  for (int i : order) {
    double t0 = now_ms();
    for (Eigen::Index j = 0; j < B; ++j) {
      yi[j] = q_all(cur[j], j);
      own[j] = static_cast<int>(b.actions(i, j));
    }
    Vec g = Vec::Zero(q_nets_[i].n_params());
    st.actor_objective[i] = q_nets_[i].td_gradient(b.obs, own, yi, g);
    clip_grad_norm(g, config_.max_grad_norm);
    Vec p = q_nets_[i].get_params();
    q_opt_[i].update(p, g);
    q_nets_[i].set_params(p);
    for (Eigen::Index j = 0; j < B; ++j) {
      int base = cur[j] - own[j] * stride_[i];
      int best = 0;
      for (int k = 1; k < n_actions_[i]; ++k)
        if (q_all(base + k * stride_[i], j) > q_all(base + best * stride_[i], j)) best = k;
      cur[j] = base + best * stride_[i];
    }
    st.agent_ms[i] = now_ms() - t0;
  }

  auto soft = [&](DuelingNet& target, const DuelingNet& source) {
    Vec t = target.get_params();
    polyak_update(t, source.get_params(), config_.polyak);
    target.set_params(t);
  };
  soft(target_global_q_, global_q_);
  for (int i = 0; i < n_agents_; ++i) soft(target_q_nets_[i], q_nets_[i]);
  return st;
}

double OffPolicyTrainer::target_matching_return(const TargetMatchingEnv& env) const {
  require(!discrete_ && n_agents_ == 2, "target matching needs two continuous agents");
  const auto& g = env.game();
  double total = 0.0;
  for (int t = 0; t < g.horizon; ++t)
    for (int c = 0; c < g.n_contexts(); ++c) {
      Mat a = greedy_actions(env.observation(c, t));
      total += g.reward(c, a(0, 0), a(act_dims_[0], 0)) / g.n_contexts();
    }
  return total;
}

JointPolicy OffPolicyTrainer::tabular_policy(const CooperativeMarkovGame& game) const {
  require(discrete_ && game.n_agents() == n_agents_ && game.n_states() == obs_dim_,
          "game does not match the trained agents");
  const int S = game.n_states();
  Mat a = greedy_actions(Mat::Identity(S, S));
  std::vector<int> per_state(S);
  for (int s = 0; s < S; ++s) per_state[s] = joint_index(a, s);
  return deterministic_joint_policy(game, per_state);
}

std::vector<CheckpointBlock> OffPolicyTrainer::checkpoint_blocks() const {
  std::vector<CheckpointBlock> out;
  for (std::size_t i = 0; i < actors_.size(); ++i)
    out.push_back(mlp_block("actor_" + std::to_string(i), actors_[i].net()));
  for (std::size_t k = 0; k < critics_.size(); ++k)
    out.push_back(mlp_block("critic_" + std::to_string(k), critics_[k]));
  for (std::size_t i = 0; i < q_nets_.size(); ++i) {
    out.push_back(mlp_block("q_" + std::to_string(i) + "_value", q_nets_[i].value_net()));
    out.push_back(mlp_block("q_" + std::to_string(i) + "_advantage", q_nets_[i].advantage_net()));
  }
  if (!q_nets_.empty()) {
    out.push_back(mlp_block("global_q_value", global_q_.value_net()));
    out.push_back(mlp_block("global_q_advantage", global_q_.advantage_net()));
  }
  return out;
}

OffTrainResult OffPolicyTrainer::run() {
  OffTrainResult out;
  const long N = config_.n_rollout_threads;
  const long vector_steps = std::max(1L, config_.num_env_steps / N);
  const int n_updates = std::max(
      1, static_cast<int>(std::lround(config_.update_per_train * config_.train_interval)));
  long next_log = config_.log_interval;
  int phases = 0;
  double return_mean = 0.0, return_std = 0.0;
  OffPolicyUpdateStats last;
  std::vector<double> last_objective(n_agents_, 0.0);

  for (long step = 1; step <= vector_steps; ++step) {
    collect_step();
    if (step % config_.train_interval == 0 && env_steps_ >= config_.warmup_steps &&
        buffer_.size() > 0) {
      std::vector<double> ms(n_agents_, 0.0);
      for (int u = 0; u < n_updates; ++u) {
        last = update();
        for (int i = 0; i < n_agents_ && last.actors_updated; ++i) {
          ms[i] += last.agent_ms[i];
          last_objective[i] = last.actor_objective[i];
        }
      }
      ++phases;
      out.update_ms.push_back(ms);
    }
    if (env_steps_ >= next_log || step == vector_steps) {
      while (next_log <= env_steps_) next_log += config_.log_interval;
      if (!recent_returns_.empty()) {
        const auto& er = recent_returns_;
        return_mean = std::accumulate(er.begin(), er.end(), 0.0) / static_cast<double>(er.size());
        double var = 0.0;
        for (double x : er) var += (x - return_mean) * (x - return_mean);
        return_std = std::sqrt(var / static_cast<double>(er.size()));
        recent_returns_.clear();
      }
      for (int i = 0; i < n_agents_; ++i) {
        OffCurveRow row;
        row.base.round = phases;
        row.base.env_steps = env_steps_;
        row.base.return_mean = return_mean;
        row.base.return_std = return_std;
        row.base.agent = i;
        row.base.surrogate = last_objective[i];
        row.critic_loss = last.critic_loss;
        row.q_mean = last.q_mean;
        out.curve.push_back(row);
      }
    }
  }
  out.final_return_mean = return_mean;
  out.env_steps = env_steps_;
  if (auto* tm = dynamic_cast<const TargetMatchingEnv*>(envs_[0].get())) {
    out.has_exact = true;
    out.exact_return = target_matching_return(*tm);
  } else if (auto* tab = dynamic_cast<const TabularEnv*>(envs_[0].get())) {
    out.policy = tabular_policy(tab->game());
    out.has_exact = true;
    out.exact_return = evaluate(tab->game(), *out.policy).J;
  }
  return out;
}

}  // namespace harl
