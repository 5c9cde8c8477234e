#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "harl/game.hpp"
#include "harl/nn.hpp"
#include "json.hpp"

namespace harl {

struct StepResult {
  double reward = 0.0;
  bool terminal = false;   // no bootstrap past this step
  bool truncated = false;  // time limit; bootstrap from the next state
};

// Fully observed multi-agent environment. Every agent sees the global
// observation. Actions are passed as one flat vector holding each agent's
// action block in agent order; a discrete action occupies one slot that
// stores its index.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int n_agents() const = 0;
  virtual int obs_dim() const = 0;
  virtual bool discrete() const = 0;
  virtual int n_actions(int agent) const = 0;   // discrete spaces
  virtual int action_dim(int agent) const = 0;  // 1 for discrete spaces
  virtual double action_low() const { return -1.0; }
  virtual double action_high() const { return 1.0; }
  virtual double gamma() const = 0;

  virtual void reset() = 0;
  virtual StepResult step(std::span<const double> actions) = 0;
  virtual const Vec& obs() const = 0;
  virtual int steps() const = 0;

  // Fresh instance with its own generator.
  virtual std::unique_ptr<Environment> clone(std::uint64_t seed) const = 0;
};

// Samples a tabular game. Observations are one-hot state indicators. An
// absorbing state ends the episode, the game's episode_limit truncates it.
class TabularEnv : public Environment {
 public:
  TabularEnv(std::shared_ptr<const CooperativeMarkovGame> game, std::uint64_t seed,
             std::string name = "tabular");

  std::string name() const override { return name_; }
  int n_agents() const override { return game_->n_agents(); }
  int obs_dim() const override { return game_->n_states(); }
  bool discrete() const override { return true; }
  int n_actions(int agent) const override { return game_->n_actions(agent); }
  int action_dim(int) const override { return 1; }
  double gamma() const override { return game_->gamma(); }

  void reset() override;
  StepResult step(std::span<const double> actions) override;
  const Vec& obs() const override { return obs_; }
  int steps() const override { return steps_; }
  std::unique_ptr<Environment> clone(std::uint64_t seed) const override;

  int state() const { return state_; }
  const CooperativeMarkovGame& game() const { return *game_; }
  std::shared_ptr<const CooperativeMarkovGame> shared_game() const { return game_; }

 private:
  void set_state(int s);

  std::shared_ptr<const CooperativeMarkovGame> game_;
  std::string name_;
  Rng rng_;
  int state_ = 0;
  int steps_ = 0;
  std::vector<int> actions_;
  Vec obs_;
};

// Episodic wrapper around TargetMatchingGame. Observation: one-hot context
// followed by t / horizon.
class TargetMatchingEnv : public Environment {
 public:
  TargetMatchingEnv(TargetMatchingGame game, std::uint64_t seed);

  std::string name() const override { return "target_matching"; }
  int n_agents() const override { return 2; }
  int obs_dim() const override { return game_.n_contexts() + 1; }
  bool discrete() const override { return false; }
  int n_actions(int) const override { return 0; }
  int action_dim(int) const override { return 1; }
  double action_low() const override { return game_.low; }
  double action_high() const override { return game_.high; }
  double gamma() const override { return game_.gamma; }

  void reset() override;
  StepResult step(std::span<const double> actions) override;
  const Vec& obs() const override { return obs_; }
  int steps() const override { return steps_; }
  std::unique_ptr<Environment> clone(std::uint64_t seed) const override;

  const TargetMatchingGame& game() const { return game_; }
  int context() const { return context_; }
  // Observation for a given context and time step.
  Vec observation(int context, int t) const;

 private:
  void draw_context();

  TargetMatchingGame game_;
  Rng rng_;
  int context_ = 0;
  int steps_ = 0;
  Vec obs_;
};

// Single-step r = a1 * a2 with actions clipped to [-1, 1].
class DiffGameEnv : public Environment {
 public:
  explicit DiffGameEnv(std::uint64_t seed);

  std::string name() const override { return "diffgame"; }
  int n_agents() const override { return 2; }
  int obs_dim() const override { return 1; }
  bool discrete() const override { return false; }
  int n_actions(int) const override { return 0; }
  int action_dim(int) const override { return 1; }
  double gamma() const override { return 0.0; }

  void reset() override { steps_ = 0; }
  StepResult step(std::span<const double> actions) override;
  const Vec& obs() const override { return obs_; }
  int steps() const override { return steps_; }
  std::unique_ptr<Environment> clone(std::uint64_t seed) const override;

 private:
  ContinuousTwoAgentGame game_;
  int steps_ = 0;
  Vec obs_;
};

// Environment from a document such as {"name": "grid_rendezvous", "side": 3}.
// Names: example2, xor, constant, random, grid_rendezvous, game_file,
// target_matching, diffgame. Unknown keys are rejected.
std::unique_ptr<Environment> make_environment(const nlohmann::json& env_doc, std::uint64_t seed);
// The tabular game behind an environment document; null for the
// continuous environments.
std::shared_ptr<const CooperativeMarkovGame> make_tabular_game(const nlohmann::json& env_doc);

}  // namespace harl
