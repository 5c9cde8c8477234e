#include "harl/env.hpp"

#include <algorithm>

#include "harl/json_io.hpp"

namespace harl {

TabularEnv::TabularEnv(std::shared_ptr<const CooperativeMarkovGame> game, std::uint64_t seed,
                       std::string name)
    : game_(std::move(game)), name_(std::move(name)), rng_(seed) {
  require(game_ != nullptr, "tabular env needs a game");
  actions_.assign(game_->n_agents(), 0);
  obs_ = Vec::Zero(game_->n_states());
  reset();
}

void TabularEnv::set_state(int s) {
  obs_[state_] = 0.0;
  state_ = s;
  obs_[state_] = 1.0;
}

void TabularEnv::reset() {
  const auto& d = game_->initial_dist();
  set_state(sample_index(std::span<const double>(d.data(), d.size()), rng_));
  steps_ = 0;
}

StepResult TabularEnv::step(std::span<const double> actions) {
  require(static_cast<int>(actions.size()) == game_->n_agents(), "one action per agent required");
  for (int i = 0; i < game_->n_agents(); ++i) {
    int a = static_cast<int>(actions[i]);
    require(a >= 0 && a < game_->n_actions(i), "action out of range");
    actions_[i] = a;
  }
  int j = game_->joint_index(actions_);
  StepResult out;
  out.reward = game_->reward(state_, j);
  auto next = game_->next_states(state_, j);
  auto prob = game_->next_probs(state_, j);
  int k = sample_index(prob, rng_);
  set_state(next[k]);
  ++steps_;
  out.terminal = game_->is_absorbing(state_);
  out.truncated = !out.terminal && game_->episode_limit() > 0 && steps_ >= game_->episode_limit();
  return out;
}

std::unique_ptr<Environment> TabularEnv::clone(std::uint64_t seed) const {
  return std::make_unique<TabularEnv>(game_, seed, name_);
}

TargetMatchingEnv::TargetMatchingEnv(TargetMatchingGame game, std::uint64_t seed)
    : game_(std::move(game)), rng_(seed) {
  require(game_.n_contexts() >= 1 && game_.horizon >= 1, "target matching needs contexts");
  reset();
}

Vec TargetMatchingEnv::observation(int context, int t) const {
  Vec o = Vec::Zero(obs_dim());
  o[context] = 1.0;
  o[game_.n_contexts()] = static_cast<double>(t) / game_.horizon;
  return o;
}

void TargetMatchingEnv::draw_context() {
  context_ = std::min(static_cast<int>(uniform01(rng_) * game_.n_contexts()),
                      game_.n_contexts() - 1);
  obs_ = observation(context_, steps_);
}

void TargetMatchingEnv::reset() {
  steps_ = 0;
  draw_context();
}

StepResult TargetMatchingEnv::step(std::span<const double> actions) {
  require(actions.size() == 2, "target matching takes two actions");
  double a1 = std::clamp(actions[0], game_.low, game_.high);
  double a2 = std::clamp(actions[1], game_.low, game_.high);
  StepResult out;
  out.reward = game_.reward(context_, a1, a2);
  ++steps_;
  out.terminal = steps_ >= game_.horizon;
  draw_context();
  return out;
}

std::unique_ptr<Environment> TargetMatchingEnv::clone(std::uint64_t seed) const {
  return std::make_unique<TargetMatchingEnv>(game_, seed);
}

DiffGameEnv::DiffGameEnv(std::uint64_t) : game_(make_diff_game()), obs_(Vec::Ones(1)) {}

StepResult DiffGameEnv::step(std::span<const double> actions) {
  require(actions.size() == 2, "diff game takes two actions");
  StepResult out;
  out.reward = game_.reward(std::clamp(actions[0], -1.0, 1.0), std::clamp(actions[1], -1.0, 1.0));
  ++steps_;
  out.terminal = true;
  return out;
}

std::unique_ptr<Environment> DiffGameEnv::clone(std::uint64_t seed) const {
  return std::make_unique<DiffGameEnv>(seed);
}

std::shared_ptr<const CooperativeMarkovGame> make_tabular_game(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("name"))
    fail(ErrorCode::config, "environment needs a name");
  auto name = json_value<std::string>(doc, "name", "");
  try {
    if (name == "example2") {
      reject_unknown_keys(doc, {"name"}, "environment");
      return std::make_shared<CooperativeMarkovGame>(make_matrix_game_example2());
    }
    if (name == "xor") {
      reject_unknown_keys(doc, {"name", "n"}, "environment");
      return std::make_shared<CooperativeMarkovGame>(make_xor_team_game(json_value(doc, "n", 2)));
    }
    if (name == "constant") {
      reject_unknown_keys(doc, {"name", "n_agents", "n_actions", "value"}, "environment");
      return std::make_shared<CooperativeMarkovGame>(make_constant_game(
          json_value(doc, "n_agents", 2), json_value(doc, "n_actions", 2),
          json_value(doc, "value", 1.0)));
    }
    if (name == "random") {
      reject_unknown_keys(doc, {"name", "n_agents", "n_states", "n_actions", "gamma", "seed",
                                "episode_limit"},
                          "environment");
      int n = json_value(doc, "n_agents", 2);
      auto game = make_random_game(n, json_value(doc, "n_states", 3),
                                   json_value(doc, "n_actions", std::vector<int>(n, 2)),
                                   json_value(doc, "gamma", 0.9),
                                   json_value<std::uint64_t>(doc, "seed", 0));
      game.set_episode_limit(json_value(doc, "episode_limit", 50));
      return std::make_shared<CooperativeMarkovGame>(std::move(game));
    }
    if (name == "grid_rendezvous") {
      reject_unknown_keys(doc, {"name", "side", "n_agents", "horizon", "gamma",
                                "asymmetric_roles", "max_states"},
                          "environment");
      GridRendezvousOptions o;
      o.side = json_value(doc, "side", o.side);
      o.n_agents = json_value(doc, "n_agents", o.n_agents);
      o.horizon = json_value(doc, "horizon", o.horizon);
      o.gamma = json_value(doc, "gamma", o.gamma);
      o.asymmetric_roles = json_value(doc, "asymmetric_roles", o.asymmetric_roles);
      o.max_states = json_value(doc, "max_states", o.max_states);
      return std::make_shared<CooperativeMarkovGame>(make_grid_rendezvous(o));
    }
    if (name == "game_file") {
      reject_unknown_keys(doc, {"name", "path"}, "environment");
      return std::make_shared<CooperativeMarkovGame>(
          game_from_json(read_json_file(json_value<std::string>(doc, "path", ""))));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) fail(ErrorCode::config, e.what());
    throw;
  }
  return nullptr;
}

std::unique_ptr<Environment> make_environment(const nlohmann::json& doc, std::uint64_t seed) {
  if (auto game = make_tabular_game(doc))
    return std::make_unique<TabularEnv>(game, seed, json_value<std::string>(doc, "name", ""));
  auto name = json_value<std::string>(doc, "name", "");
  if (name == "target_matching") {
    reject_unknown_keys(doc, {"name", "targets", "balance", "horizon", "gamma"}, "environment");
    TargetMatchingGame g;
    g.targets = json_value(doc, "targets", g.targets);
    g.balance = json_value(doc, "balance", g.balance);
    g.horizon = json_value(doc, "horizon", g.horizon);
    g.gamma = json_value(doc, "gamma", g.gamma);
    if (g.gamma < 0.0 || g.gamma >= 1.0) fail(ErrorCode::config, "gamma must lie in [0, 1)");
    return std::make_unique<TargetMatchingEnv>(g, seed);
  }
  if (name == "diffgame") {
    reject_unknown_keys(doc, {"name"}, "environment");
    return std::make_unique<DiffGameEnv>(seed);
  }
  fail(ErrorCode::config, "unknown environment '" + name + "'");
}

}  // namespace harl
