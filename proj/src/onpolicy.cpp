#include "harl/onpolicy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "harl/json_io.hpp"

namespace harl {

using nlohmann::json;

UpdateScheme scheme_from_name(const std::string& name) {
  if (name == "sequential_random" || name == "sequential-random") return UpdateScheme::sequential_random;
  if (name == "sequential_fixed" || name == "sequential-fixed") return UpdateScheme::sequential_fixed;
  if (name == "simultaneous") return UpdateScheme::simultaneous;
  if (name == "shared" || name == "shared_parameter" || name == "shared-parameter")
    return UpdateScheme::shared;
  fail(ErrorCode::config, "unknown update scheme '" + name + "'");
}

std::string scheme_name(UpdateScheme scheme) {
  switch (scheme) {
    case UpdateScheme::sequential_random: return "sequential_random";
    case UpdateScheme::sequential_fixed: return "sequential_fixed";
    case UpdateScheme::simultaneous: return "simultaneous";
    case UpdateScheme::shared: return "shared";
  }
  return "sequential_random";
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::config, m); };
  if (algorithm != "happo" && algorithm != "hatrpo" && algorithm != "haa2c")
    bad("unknown on-policy algorithm '" + algorithm + "'");
  if (n_rollout_threads < 1 || episode_length < 1) bad("rollout size must be positive");
  if (num_env_steps < 1) bad("num_env_steps must be positive");
  if (ppo_epoch < 1 || a2c_epoch < 1 || critic_epoch < 1) bad("epoch counts must be positive");
  if (actor_num_mini_batch < 1 || critic_num_mini_batch < 1) bad("mini batch counts must be positive");
  if (!(clip_param > 0.0 && clip_param < 1.0)) bad("clip_param must lie in (0, 1)");
  if (!(kl_threshold > 0.0)) bad("kl_threshold must be positive");
  if (!(backtrack_coeff > 0.0 && backtrack_coeff < 1.0)) bad("backtrack_coeff must lie in (0, 1)");
  if (!(accept_ratio >= 0.0)) bad("accept_ratio must be nonnegative");
  if (ls_step < 0 || cg_iters < 1 || !(cg_tol > 0.0) || !(fvp_damping >= 0.0)) bad("bad line search or CG settings");
  if (gamma >= 1.0) bad("gamma must be below 1");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) bad("gae_lambda must lie in [0, 1]");
  if (!(lr > 0.0) || !(critic_lr > 0.0) || !(opti_eps > 0.0)) bad("learning rates must be positive");
  if (!(huber_delta > 0.0)) bad("huber_delta must be positive");
  if (!(std_init > 0.0)) bad("std_init must be positive");
  if (log_interval < 1) bad("log_interval must be positive");
  for (int h : hidden_sizes) if (h < 1) bad("hidden sizes must be positive");
  for (int h : critic_hidden_sizes) if (h < 1) bad("hidden sizes must be positive");
  activation_from_name(activation);
}

TrainConfig train_config_from_json(const json& doc) {
  reject_unknown_keys(doc,
                      {"algorithm", "scheme", "n_rollout_threads", "episode_length",
                       "num_env_steps", "ppo_epoch", "a2c_epoch", "critic_epoch",
                       "actor_num_mini_batch", "critic_num_mini_batch", "clip_param",
                       "entropy_coef", "gamma", "gae_lambda", "max_grad_norm", "kl_threshold",
                       "backtrack_coeff", "accept_ratio", "ls_step", "cg_iters", "cg_tol",
                       "fvp_damping", "lr", "critic_lr", "opti_eps", "use_huber_loss", "huber_delta",
                       "advantage_norm", "hidden_sizes", "critic_hidden_sizes", "activation",
                       "gain", "std_init", "log_interval"},
                      "train");
  TrainConfig c;
  c.algorithm = json_value(doc, "algorithm", c.algorithm);
  c.scheme = scheme_from_name(json_value(doc, "scheme", scheme_name(c.scheme)));
  c.n_rollout_threads = json_value(doc, "n_rollout_threads", c.n_rollout_threads);
  c.episode_length = json_value(doc, "episode_length", c.episode_length);
  c.num_env_steps = json_value(doc, "num_env_steps", c.num_env_steps);
  c.ppo_epoch = json_value(doc, "ppo_epoch", c.ppo_epoch);
  c.a2c_epoch = json_value(doc, "a2c_epoch", c.a2c_epoch);
  c.critic_epoch = json_value(doc, "critic_epoch", c.critic_epoch);
  c.actor_num_mini_batch = json_value(doc, "actor_num_mini_batch", c.actor_num_mini_batch);
  c.critic_num_mini_batch = json_value(doc, "critic_num_mini_batch", c.critic_num_mini_batch);
  c.clip_param = json_value(doc, "clip_param", c.clip_param);
  c.entropy_coef = json_value(doc, "entropy_coef", c.entropy_coef);
  c.gamma = json_value(doc, "gamma", c.gamma);
  c.gae_lambda = json_value(doc, "gae_lambda", c.gae_lambda);
  c.max_grad_norm = json_value(doc, "max_grad_norm", c.max_grad_norm);
  c.kl_threshold = json_value(doc, "kl_threshold", c.kl_threshold);
  c.backtrack_coeff = json_value(doc, "backtrack_coeff", c.backtrack_coeff);
  c.accept_ratio = json_value(doc, "accept_ratio", c.accept_ratio);
  c.ls_step = json_value(doc, "ls_step", c.ls_step);
  c.cg_iters = json_value(doc, "cg_iters", c.cg_iters);
  c.cg_tol = json_value(doc, "cg_tol", c.cg_tol);
  c.fvp_damping = json_value(doc, "fvp_damping", c.fvp_damping);
  c.lr = json_value(doc, "lr", c.lr);
  c.critic_lr = json_value(doc, "critic_lr", c.critic_lr);
  c.opti_eps = json_value(doc, "opti_eps", c.opti_eps);
  c.use_huber_loss = json_value(doc, "use_huber_loss", c.use_huber_loss);
  c.huber_delta = json_value(doc, "huber_delta", c.huber_delta);
  c.advantage_norm = json_value(doc, "advantage_norm", c.advantage_norm);
  c.hidden_sizes = json_value(doc, "hidden_sizes", c.hidden_sizes);
  c.critic_hidden_sizes = json_value(doc, "critic_hidden_sizes", c.critic_hidden_sizes);
  c.activation = json_value(doc, "activation", c.activation);
  c.gain = json_value(doc, "gain", c.gain);
  c.std_init = json_value(doc, "std_init", c.std_init);
  c.log_interval = json_value(doc, "log_interval", c.log_interval);
  c.validate();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"algorithm", c.algorithm},
              {"scheme", scheme_name(c.scheme)},
              {"n_rollout_threads", c.n_rollout_threads},
              {"episode_length", c.episode_length},
              {"num_env_steps", c.num_env_steps},
              {"ppo_epoch", c.ppo_epoch},
              {"a2c_epoch", c.a2c_epoch},
              {"critic_epoch", c.critic_epoch},
              {"actor_num_mini_batch", c.actor_num_mini_batch},
              {"critic_num_mini_batch", c.critic_num_mini_batch},
              {"clip_param", c.clip_param},
              {"entropy_coef", c.entropy_coef},
              {"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"max_grad_norm", c.max_grad_norm},
              {"kl_threshold", c.kl_threshold},
              {"backtrack_coeff", c.backtrack_coeff},
              {"accept_ratio", c.accept_ratio},
              {"ls_step", c.ls_step},
              {"cg_iters", c.cg_iters},
              {"cg_tol", c.cg_tol},
              {"fvp_damping", c.fvp_damping},
              {"lr", c.lr},
              {"critic_lr", c.critic_lr},
              {"opti_eps", c.opti_eps},
              {"use_huber_loss", c.use_huber_loss},
              {"huber_delta", c.huber_delta},
              {"advantage_norm", c.advantage_norm},
              {"hidden_sizes", c.hidden_sizes},
              {"critic_hidden_sizes", c.critic_hidden_sizes},
              {"activation", c.activation},
              {"gain", c.gain},
              {"std_init", c.std_init},
              {"log_interval", c.log_interval}};
}

// ---- actor ----

int Actor::n_params() const {
  return std::visit([](const auto& p) { return p.n_params(); }, head_);
}

int Actor::action_rows() const {
  return categorical() ? 1 : as_gaussian().act_dim();
}

Vec Actor::get_params() const {
  return std::visit([](const auto& p) { return Vec(p.get_params()); }, head_);
}

void Actor::set_params(const Vec& p) {
  std::visit([&](auto& h) { h.set_params(p); }, head_);
}

Vec Actor::log_prob(const Mat& obs, const Mat& actions) const {
  return std::visit([&](const auto& p) { return p.log_prob(obs, actions); }, head_);
}

Vec Actor::grad_log_prob(const Mat& obs, const Mat& actions, const Vec& weights) const {
  return std::visit([&](const auto& p) { return p.grad_log_prob(obs, actions, weights); }, head_);
}

double Actor::entropy(const Mat& obs, Vec* grad) const {
  return std::visit([&](const auto& p) { return p.entropy(obs, grad); }, head_);
}

double Actor::mean_kl(const Actor& old, const Mat& obs) const {
  if (categorical()) return as_categorical().mean_kl(obs, old.as_categorical().probs(obs));
  const auto& o = old.as_gaussian();
  return as_gaussian().mean_kl(obs, o.mean(obs), o.log_std());
}

Vec Actor::fisher_vector_product(const Mat& obs, const Vec& v) const {
  return std::visit([&](const auto& p) { return p.fisher_vector_product(obs, v); }, head_);
}

void Actor::sample(const Mat& obs, Rng& rng, Mat& actions, Vec& log_probs,
                   Mat& env_actions) const {
  const Eigen::Index B = obs.cols();
  log_probs.resize(B);
  if (categorical()) {
    Mat p = as_categorical().probs(obs);
    actions.resize(1, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      int a = sample_index(std::span<const double>(p.col(b).data(), p.rows()), rng);
      actions(0, b) = a;
      log_probs[b] = std::log(p(a, b));
    }
    env_actions = actions;
    return;
  }
  const auto& g = as_gaussian();
  Mat mu = g.mean(obs);
  actions.resize(mu.rows(), B);
  env_actions.resize(mu.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    double lp = 0.0;
    for (Eigen::Index d = 0; d < mu.rows(); ++d) {
      double z = normal01(rng);
      actions(d, b) = mu(d, b) + std::exp(g.log_std()[d]) * z;
      lp += -0.5 * z * z - g.log_std()[d] - 0.5 * std::log(2.0 * M_PI);
    }
    log_probs[b] = lp;
    env_actions.col(b) = g.to_env(actions.col(b));
  }
}

CheckpointBlock Actor::checkpoint_block(const std::string& name) const {
  CheckpointBlock b;
  b.name = name;
  const Mlp& net = categorical() ? as_categorical().net() : as_gaussian().net();
  b.widths = net.widths();
  b.hidden_activation = activation_name(net.hidden_activation());
  b.output_activation = activation_name(net.output_activation());
  b.extra = categorical() ? 0 : as_gaussian().act_dim();
  b.params = get_params();
  return b;
}

// ---- rollouts ----

RolloutBatch collect(std::vector<std::unique_ptr<Environment>>& envs,
                     const std::vector<const Actor*>& actors, const Mlp& critic, int steps,
                     Rng& rng, std::vector<double>& episode_acc) {
  require(!envs.empty() && steps >= 1, "collect needs environments and steps");
  const int N = static_cast<int>(envs.size());
  const int n = envs[0]->n_agents();
  const int d = envs[0]->obs_dim();
  require(static_cast<int>(actors.size()) == n, "one actor per agent required");
  if (static_cast<int>(episode_acc.size()) != N) episode_acc.assign(N, 0.0);
  RolloutBatch batch;
  batch.n_threads = N;
  batch.length = steps;
  const int B = N * steps;
  batch.obs.resize(d, B);
  batch.next_obs.resize(d, B);
  batch.actions.assign(n, Mat());
  batch.old_log_probs.assign(n, Vec(B));
  for (int i = 0; i < n; ++i) batch.actions[i].resize(actors[i]->action_rows(), B);
  batch.rewards.resize(B);
  batch.terminal.assign(B, 0);
  batch.truncated.assign(B, 0);

  Mat O(d, N);
  std::vector<Mat> acts(n), env_acts(n);
  std::vector<Vec> lps(n);
  std::vector<double> flat;
  for (int t = 0; t < steps; ++t) {
    for (int e = 0; e < N; ++e) O.col(e) = envs[e]->obs();
    for (int i = 0; i < n; ++i) actors[i]->sample(O, rng, acts[i], lps[i], env_acts[i]);
    for (int e = 0; e < N; ++e) {
      const int idx = t * N + e;
      batch.obs.col(idx) = O.col(e);
      flat.clear();
      for (int i = 0; i < n; ++i) {
        batch.actions[i].col(idx) = acts[i].col(e);
        batch.old_log_probs[i][idx] = lps[i][e];
        for (Eigen::Index k = 0; k < env_acts[i].rows(); ++k) flat.push_back(env_acts[i](k, e));
      }
      StepResult res = envs[e]->step(flat);
      batch.rewards[idx] = res.reward;
      batch.terminal[idx] = res.terminal;
      batch.truncated[idx] = res.truncated;
      batch.next_obs.col(idx) = envs[e]->obs();
      episode_acc[e] += res.reward;
      if (res.terminal || res.truncated) {
        batch.episode_returns.push_back(episode_acc[e]);
        episode_acc[e] = 0.0;
        envs[e]->reset();
      }
    }
  }
  batch.values = critic.forward(batch.obs).row(0).transpose();
  batch.next_values = critic.forward(batch.next_obs).row(0).transpose();
  return batch;
}

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        double gamma, double lambda) {
  require(values.size() == rewards.size() + 1, "gae needs one bootstrap value");
  std::vector<double> adv(rewards.size());
  double next = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    double delta = rewards[k] + gamma * values[k + 1] - values[k];
    next = delta + gamma * lambda * next;
    adv[k] = next;
  }
  return adv;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda) {
  const int N = batch.n_threads;
  const int B = batch.size();
  batch.advantages.resize(B);
  for (int e = 0; e < N; ++e) {
    double next = 0.0;
    for (int t = batch.length - 1; t >= 0; --t) {
      const int idx = t * N + e;
      const bool term = batch.terminal[idx];
      const bool boundary = term || batch.truncated[idx];
      double delta = batch.rewards[idx] + (term ? 0.0 : gamma * batch.next_values[idx]) -
                     batch.values[idx];
      next = delta + (boundary ? 0.0 : gamma * lambda * next);
      batch.advantages[idx] = next;
    }
  }
  batch.returns = batch.advantages + batch.values;
}

double clip_term(double ratio, double m, double eps) {
  return std::min(ratio * m, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * m);
}

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::vector<std::vector<int>> minibatches(int B, int n_mb, Rng& rng) {
  std::vector<std::vector<int>> out;
  if (n_mb <= 1) {
    out.emplace_back(B);
    std::iota(out[0].begin(), out[0].end(), 0);
    return out;
  }
  auto perm = random_permutation(B, rng);
  const int size = B / n_mb;
  require(size >= 1, "more mini batches than samples");
  for (int k = 0; k < n_mb; ++k)
    out.emplace_back(perm.begin() + k * size, perm.begin() + (k + 1) * size);
  return out;
}

void fill_ratio_stats(const Actor& actor, const Actor& old, const ActorData& data, const Vec& M,
                      double eps, AgentUpdateStats& stats) {
  Vec r = (actor.log_prob(data.obs, data.actions) - data.old_log_probs).array().exp().matrix();
  double surr = 0.0;
  int clipped = 0;
  for (Eigen::Index b = 0; b < r.size(); ++b) {
    surr += clip_term(r[b], M[b], eps);
    if (std::abs(r[b] - 1.0) > eps) ++clipped;
  }
  stats.surrogate = surr / static_cast<double>(r.size());
  stats.clip_frac = static_cast<double>(clipped) / static_cast<double>(r.size());
  stats.kl_mean = actor.mean_kl(old, data.obs);
}

// Shared body of the HAPPO and HAA2C ascent loops.
void ratio_ascent(Actor& actor, const ActorData& data, const Vec& M, const TrainConfig& config,
                  AdamState& opt, Rng& rng, int epochs, bool clip) {
  const int B = static_cast<int>(data.obs.cols());
  const double eps = config.clip_param;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& idx : minibatches(B, config.actor_num_mini_batch, rng)) {
      const bool all = static_cast<int>(idx.size()) == B;
      Mat obs = all ? data.obs : Mat(data.obs(Eigen::all, idx));
      Mat act = all ? data.actions : Mat(data.actions(Eigen::all, idx));
      Vec old = all ? data.old_log_probs : Vec(data.old_log_probs(idx));
      Vec m = all ? M : Vec(M(idx));
      const double inv = 1.0 / static_cast<double>(idx.size());
      Vec r = (actor.log_prob(obs, act) - old).array().exp().matrix();
      Vec w(r.size());
      double objective = 0.0;
      for (Eigen::Index b = 0; b < r.size(); ++b) {
        if (clip) {
          objective += clip_term(r[b], m[b], eps);
          bool inside = r[b] >= 1.0 - eps && r[b] <= 1.0 + eps;
          bool unclipped_min = r[b] * m[b] <= std::clamp(r[b], 1.0 - eps, 1.0 + eps) * m[b];
          w[b] = (inside || unclipped_min) ? m[b] * r[b] * inv : 0.0;
        } else {
          objective += r[b] * m[b];
          w[b] = m[b] * r[b] * inv;
        }
      }
      Vec grad = actor.grad_log_prob(obs, act, w);
      if (config.entropy_coef != 0.0) {
        Vec gh;
        objective += config.entropy_coef * actor.entropy(obs, &gh) * static_cast<double>(r.size());
        grad += config.entropy_coef * gh;
      }
      if (!std::isfinite(objective) || !grad.allFinite())
        fail(ErrorCode::numeric, "non-finite actor loss");
      Vec descent = -grad;
      clip_grad_norm(descent, config.max_grad_norm);
      Vec params = actor.get_params();
      opt.update(params, descent);
      actor.set_params(params);
    }
  }
}

}  // namespace

AgentUpdateStats happo_agent_update(Actor& actor, const ActorData& data, const Vec& M,
                                    const TrainConfig& config, AdamState& opt, Rng& rng) {
  Actor old = actor;
  ratio_ascent(actor, data, M, config, opt, rng, config.ppo_epoch, true);
  AgentUpdateStats stats;
  fill_ratio_stats(actor, old, data, M, config.clip_param, stats);
  return stats;
}

AgentUpdateStats haa2c_agent_update(Actor& actor, const ActorData& data, const Vec& M,
                                    const TrainConfig& config, AdamState& opt, Rng& rng) {
  Actor old = actor;
  ratio_ascent(actor, data, M, config, opt, rng, config.a2c_epoch, false);
  AgentUpdateStats stats;
  fill_ratio_stats(actor, old, data, M, config.clip_param, stats);
  Vec r = (actor.log_prob(data.obs, data.actions) - data.old_log_probs).array().exp().matrix();
  stats.surrogate = r.cwiseProduct(M).mean();
  return stats;
}

Vec conjugate_gradient(const std::function<Vec(const Vec&)>& hvp, const Vec& g, int max_iters,
                       double tol, double* residual) {
  Vec x = Vec::Zero(g.size());
  const double gnorm = g.norm();
  if (gnorm == 0.0) {
    if (residual) *residual = 0.0;
    return x;
  }
  Vec r = g;
  Vec p = r;
  double rr = r.squaredNorm();
  for (int k = 0; k < max_iters; ++k) {
    if (std::sqrt(rr) <= tol * gnorm) break;
    Vec Hp = hvp(p);
    double pHp = p.dot(Hp);
    if (!(pHp > 0.0)) break;
    double alpha = rr / pHp;
    x += alpha * p;
    r -= alpha * Hp;
    double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  if (residual) *residual = (hvp(x) - g).norm() / gnorm;
  return x;
}

AgentUpdateStats hatrpo_agent_update(Actor& actor, const ActorData& data, const Vec& M,
                                     const TrainConfig& config) {
  AgentUpdateStats stats;
  const Actor old = actor;
  const Vec theta0 = actor.get_params();
  const double B = static_cast<double>(data.obs.cols());
  auto sample_loss = [&](const Actor& a) {
    Vec r = (a.log_prob(data.obs, data.actions) - data.old_log_probs).array().exp().matrix();
    return r.cwiseProduct(M).mean();
  };
  Vec r0 = (actor.log_prob(data.obs, data.actions) - data.old_log_probs).array().exp().matrix();
  Vec g = actor.grad_log_prob(data.obs, data.actions, (M.cwiseProduct(r0) / B).eval());
  if (!g.allFinite()) fail(ErrorCode::numeric, "non-finite policy gradient");
  const double L0 = r0.cwiseProduct(M).mean();
  auto hvp = [&](const Vec& v) {
    Vec out = old.fisher_vector_product(data.obs, v) + config.fvp_damping * v;
    return out;
  };
  double res = 0.0;
  Vec x = conjugate_gradient(hvp, g, config.cg_iters, config.cg_tol, &res);
  stats.cg_residual = res;
  const double xHx = x.dot(hvp(x));
  if (!(xHx > 0.0) || !std::isfinite(xHx)) {
    fill_ratio_stats(actor, old, data, M, config.clip_param, stats);
    stats.surrogate = L0;
    return stats;
  }
  const double beta = std::sqrt(2.0 * config.kl_threshold / xHx);
  const double full = beta * x.dot(g);
  double coef = 1.0;
  for (int j = 0; j <= config.ls_step; ++j, coef *= config.backtrack_coeff) {
    actor.set_params(theta0 + coef * beta * x);
    double improvement = sample_loss(actor) - L0;
    double kl = actor.mean_kl(old, data.obs);
    if (std::isfinite(improvement) && kl <= config.kl_threshold &&
        improvement >= config.accept_ratio * coef * full) {
      stats.accepted = true;
      stats.ls_index = j;
      stats.improvement = improvement;
      stats.expected = coef * full;
      break;
    }
  }
  if (!stats.accepted) actor.set_params(theta0);
  fill_ratio_stats(actor, old, data, M, config.clip_param, stats);
  stats.surrogate = sample_loss(actor);
  return stats;
}

double critic_update(Mlp& critic, const RolloutBatch& batch, const TrainConfig& config,
                     AdamState& opt, Rng& rng) {
  const int B = batch.size();
  double first_loss = -1.0;
  for (int epoch = 0; epoch < config.critic_epoch; ++epoch) {
    for (const auto& idx : minibatches(B, config.critic_num_mini_batch, rng)) {
      const bool all = static_cast<int>(idx.size()) == B;
      Mat obs = all ? batch.obs : Mat(batch.obs(Eigen::all, idx));
      Vec target = all ? batch.returns : Vec(batch.returns(idx));
      Mlp::Cache cache;
      Mat v = critic.forward(obs, &cache);
      const double inv = 1.0 / static_cast<double>(idx.size());
      Mat dy(1, v.cols());
      double loss = 0.0;
      for (Eigen::Index b = 0; b < v.cols(); ++b) {
        double e = v(0, b) - target[b];
        if (config.use_huber_loss) {
          loss += huber(e, config.huber_delta);
          dy(0, b) = huber_grad(e, config.huber_delta) * inv;
        } else {
          loss += 0.5 * e * e;
          dy(0, b) = e * inv;
        }
      }
      loss *= inv;
      if (!std::isfinite(loss)) fail(ErrorCode::numeric, "non-finite critic loss");
      if (first_loss < 0.0) first_loss = loss;
      Vec grad = Vec::Zero(critic.n_params());
      critic.backward(cache, dy, grad);
      clip_grad_norm(grad, config.max_grad_norm);
      opt.update(critic.params(), grad);
    }
  }
  return first_loss;
}

std::string curve_header() {
  return "round,env_steps,return_mean,return_std,agent,kl_mean,surrogate,clip_frac";
}

std::string curve_row_csv(const CurveRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%ld,%.10g,%.10g,%d,%.10g,%.10g,%.10g", r.round, r.env_steps,
                r.return_mean, r.return_std, r.agent, r.kl_mean, r.surrogate, r.clip_frac);
  return buf;
}

// ---- trainer ----

OnPolicyTrainer::OnPolicyTrainer(const Environment& env, const TrainConfig& config,
                                 std::uint64_t seed)
    : config_(config), rng_(mix_seed(seed, 1)), perm_rng_(mix_seed(seed, 2)) {
  config_.validate();
  n_agents_ = env.n_agents();
  gamma_ = config_.gamma < 0.0 ? env.gamma() : config_.gamma;
  for (int e = 0; e < config_.n_rollout_threads; ++e)
    envs_.push_back(env.clone(mix_seed(seed, 100 + static_cast<std::uint64_t>(e))));
  Rng init(mix_seed(seed, 0));
  const Activation act = activation_from_name(config_.activation);
  const int n_actors = config_.scheme == UpdateScheme::shared ? 1 : n_agents_;
  if (config_.scheme == UpdateScheme::shared) {
    for (int i = 1; i < n_agents_; ++i)
      if (env.discrete() ? env.n_actions(i) != env.n_actions(0)
                         : env.action_dim(i) != env.action_dim(0))
        fail(ErrorCode::config, "parameter sharing needs identical action spaces");
  }
  for (int i = 0; i < n_actors; ++i) {
    if (env.discrete())
      actors_.emplace_back(CategoricalPolicy(env.obs_dim(), config_.hidden_sizes,
                                             env.n_actions(i), act, config_.gain, init));
    else
      actors_.emplace_back(DiagGaussianPolicy(env.obs_dim(), config_.hidden_sizes,
                                              env.action_dim(i), act, config_.gain,
                                              std::log(config_.std_init), true,
                                              env.action_low(), env.action_high(), init));
    actor_opt_.emplace_back(actors_.back().n_params(), config_.lr, config_.opti_eps);
  }
  std::vector<int> cw{env.obs_dim()};
  cw.insert(cw.end(), config_.critic_hidden_sizes.begin(), config_.critic_hidden_sizes.end());
  cw.push_back(1);
  critic_ = Mlp(cw, act, Activation::identity, 1.0, init);
  critic_opt_ = AdamState(critic_.n_params(), config_.critic_lr, config_.opti_eps);
}

const Actor& OnPolicyTrainer::actor_for(int agent) const {
  return config_.scheme == UpdateScheme::shared ? actors_[0] : actors_[agent];
}

std::vector<CurveRow> OnPolicyTrainer::round() {
  ++round_;
  std::vector<const Actor*> ptrs;
  for (int i = 0; i < n_agents_; ++i) ptrs.push_back(&actor_for(i));
  batch_ = collect(envs_, ptrs, critic_, config_.episode_length, rng_, episode_acc_);
  env_steps_ += batch_.size();
  compute_gae(batch_, gamma_, config_.gae_lambda);
  if (!batch_.episode_returns.empty()) {
    const auto& er = batch_.episode_returns;
    double mean = std::accumulate(er.begin(), er.end(), 0.0) / static_cast<double>(er.size());
    double var = 0.0;
    for (double x : er) var += (x - mean) * (x - mean);
    return_mean_ = mean;
    return_std_ = std::sqrt(var / static_cast<double>(er.size()));
  }

  Vec A = batch_.advantages;
  if (config_.advantage_norm) {
    double mean = A.mean();
    double sd = std::sqrt((A.array() - mean).square().mean());
    A = ((A.array() - mean) / (sd + 1e-8)).matrix();
  }

  last_updates_.clear();
  std::vector<double> times(n_agents_, 0.0);
  auto run_update = [&](Actor& actor, AdamState& opt, const ActorData& data, const Vec& M) {
    if (config_.algorithm == "happo") return happo_agent_update(actor, data, M, config_, opt, rng_);
    if (config_.algorithm == "hatrpo") return hatrpo_agent_update(actor, data, M, config_);
    return haa2c_agent_update(actor, data, M, config_, opt, rng_);
  };

  if (config_.scheme == UpdateScheme::shared) {
    const int B = batch_.size();
    ActorData data;
    data.obs.resize(batch_.obs.rows(), static_cast<Eigen::Index>(B) * n_agents_);
    data.actions.resize(batch_.actions[0].rows(), data.obs.cols());
    data.old_log_probs.resize(data.obs.cols());
    Vec M(data.obs.cols());
    for (int i = 0; i < n_agents_; ++i) {
      data.obs.middleCols(static_cast<Eigen::Index>(i) * B, B) = batch_.obs;
      data.actions.middleCols(static_cast<Eigen::Index>(i) * B, B) = batch_.actions[i];
      data.old_log_probs.segment(static_cast<Eigen::Index>(i) * B, B) = batch_.old_log_probs[i];
      M.segment(static_cast<Eigen::Index>(i) * B, B) = A;
    }
    double t0 = now_ms();
    auto stats = run_update(actors_[0], actor_opt_[0], data, M);
    stats.agent = -1;
    stats.time_ms = now_ms() - t0;
    for (auto& t : times) t = stats.time_ms / n_agents_;
    last_updates_.push_back(stats);
    last_order_.clear();
    last_m_error_ = 0.0;
  } else {
    std::vector<int> order(n_agents_);
    std::iota(order.begin(), order.end(), 0);
    if (config_.scheme == UpdateScheme::sequential_random) order = random_permutation(n_agents_, perm_rng_);
    last_order_ = order;
    const bool sequential = config_.scheme != UpdateScheme::simultaneous;
    Vec M = A;
    for (int i : order) {
      ActorData data{batch_.obs, batch_.actions[i], batch_.old_log_probs[i]};
      double t0 = now_ms();
      auto stats = run_update(actors_[i], actor_opt_[i], data, sequential ? M : A);
      if (sequential) {
        // Computed after every agent, including the last.
        Vec lp = actors_[i].log_prob(batch_.obs, batch_.actions[i]);
        M = M.cwiseProduct((lp - batch_.old_log_probs[i]).array().exp().matrix());
      }
      stats.agent = i;
      stats.time_ms = now_ms() - t0;
      times[i] = stats.time_ms;
      last_updates_.push_back(stats);
    }
    if (sequential) {
      Vec log_ratio = Vec::Zero(A.size());
      for (int i = 0; i < n_agents_; ++i)
        log_ratio += actors_[i].log_prob(batch_.obs, batch_.actions[i]) - batch_.old_log_probs[i];
      Vec expected = A.cwiseProduct(log_ratio.array().exp().matrix());
      last_m_error_ = (M - expected).cwiseAbs().maxCoeff();
    } else {
      last_m_error_ = 0.0;
    }
  }
  critic_update(critic_, batch_, config_, critic_opt_, rng_);
  update_ms_.push_back(times);
  all_updates_.insert(all_updates_.end(), last_updates_.begin(), last_updates_.end());

  std::vector<CurveRow> rows;
  for (const auto& u : last_updates_) {
    CurveRow row;
    row.round = round_;
    row.env_steps = env_steps_;
    row.return_mean = return_mean_;
    row.return_std = return_std_;
    row.agent = u.agent;
    row.kl_mean = u.kl_mean;
    row.surrogate = u.surrogate;
    row.clip_frac = u.clip_frac;
    rows.push_back(row);
  }
  return rows;
}

JointPolicy OnPolicyTrainer::tabular_policy(const CooperativeMarkovGame& game, bool greedy) const {
  require(game.n_agents() == n_agents_, "game does not match the trained agents");
  const int S = game.n_states();
  Mat eye = Mat::Identity(S, S);
  JointPolicy pi;
  for (int i = 0; i < n_agents_; ++i) {
    const Actor& a = actor_for(i);
    require(a.categorical(), "tabular policies need categorical actors");
    Mat p = a.as_categorical().probs(eye);
    std::vector<double> flat(static_cast<std::size_t>(S) * p.rows());
    for (int s = 0; s < S; ++s) {
      if (greedy) {
        Eigen::Index best = 0;
        p.col(s).maxCoeff(&best);
        for (Eigen::Index k = 0; k < p.rows(); ++k) flat[s * p.rows() + k] = k == best ? 1.0 : 0.0;
      } else {
        double total = p.col(s).sum();
        for (Eigen::Index k = 0; k < p.rows(); ++k) flat[s * p.rows() + k] = p(k, s) / total;
      }
    }
    pi.emplace_back(S, static_cast<int>(p.rows()), std::move(flat));
  }
  return pi;
}

TrainResult OnPolicyTrainer::run() {
  TrainResult out;
  const long per_round = static_cast<long>(config_.n_rollout_threads) * config_.episode_length;
  const long rounds = std::max(1L, config_.num_env_steps / per_round);
  for (long k = 0; k < rounds; ++k) {
    auto rows = round();
    if (round_ % config_.log_interval == 0 || k + 1 == rounds)
      out.curve.insert(out.curve.end(), rows.begin(), rows.end());
  }
  out.updates = all_updates_;
  out.update_ms = update_ms_;
  out.actors = actors_;
  out.critic = critic_;
  out.final_return_mean = return_mean_;
  out.env_steps = env_steps_;
  if (auto* tab = dynamic_cast<const TabularEnv*>(envs_[0].get())) {
    const auto& game = tab->game();
    out.policy = tabular_policy(game, false);
    out.exact_J = evaluate(game, *out.policy).J;
    out.greedy_J = evaluate(game, tabular_policy(game, true)).J;
  }
  return out;
}

}  // namespace harl
