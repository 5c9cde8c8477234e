#include "harl/harl.h"

#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "harl/env.hpp"
#include "harl/experiments.hpp"
#include "harl/json_io.hpp"
#include "harl/offpolicy.hpp"
#include "harl/onpolicy.hpp"

struct harl_game {
  std::shared_ptr<const harl::CooperativeMarkovGame> game;
};

struct harl_policy {
  harl::JointPolicy policy;
};

struct harl_trainer {
  std::unique_ptr<harl::Environment> env;
  std::unique_ptr<harl::OnPolicyTrainer> on;
  std::unique_ptr<harl::OffPolicyTrainer> off;
};

namespace {

thread_local std::string last_error;

harl_status to_status(harl::ErrorCode code) {
  switch (code) {
    case harl::ErrorCode::invalid_argument: return HARL_ERR_INVALID_ARGUMENT;
    case harl::ErrorCode::config: return HARL_ERR_CONFIG;
    case harl::ErrorCode::numeric: return HARL_ERR_NUMERIC;
    case harl::ErrorCode::convergence: return HARL_ERR_CONVERGENCE;
    case harl::ErrorCode::check_failed: return HARL_ERR_CHECK_FAILED;
    case harl::ErrorCode::io: return HARL_ERR_IO;
  }
  return HARL_ERR_INTERNAL;
}

template <class F>
harl_status guarded(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const harl::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("json: ") + e.what();
    return HARL_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return HARL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return HARL_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return HARL_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) harl::fail(harl::ErrorCode::invalid_argument, std::string(what) + " is null");
}

nlohmann::json parse(const char* text, const char* what) {
  need(text, what);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    harl::fail(harl::ErrorCode::config, std::string("cannot parse ") + what + ": " + e.what());
  }
}

harl_status report(const nlohmann::json& doc, char** out) {
  *out = dup_string(doc.dump(2));
  bool passed = !doc.contains("passed") || doc.at("passed").get<bool>();
  if (!passed) last_error = "check failed";
  return passed ? HARL_OK : HARL_ERR_CHECK_FAILED;
}

}  // namespace

extern "C" {

const char* harl_version(void) { return "1.0.0"; }

const char* harl_last_error(void) { return last_error.c_str(); }

const char* harl_status_name(harl_status status) {
  switch (status) {
    case HARL_OK: return "ok";
    case HARL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case HARL_ERR_CONFIG: return "config";
    case HARL_ERR_NUMERIC: return "numeric";
    case HARL_ERR_CONVERGENCE: return "convergence";
    case HARL_ERR_CHECK_FAILED: return "check_failed";
    case HARL_ERR_IO: return "io";
    case HARL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void harl_string_free(char* s) { std::free(s); }

harl_status harl_game_create(const char* env_json, harl_game** out) {
  return guarded([&] {
    need(out, "out");
    auto game = harl::make_tabular_game(parse(env_json, "env_json"));
    if (!game) harl::fail(harl::ErrorCode::config, "environment is not tabular");
    *out = new harl_game{std::move(game)};
    return HARL_OK;
  });
}

harl_status harl_game_load(const char* path, harl_game** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto game = std::make_shared<harl::CooperativeMarkovGame>(
        harl::game_from_json(harl::read_json_file(path)));
    *out = new harl_game{std::move(game)};
    return HARL_OK;
  });
}

void harl_game_destroy(harl_game* game) { delete game; }

harl_status harl_game_info(const harl_game* game, int* n_agents, int* n_states, int* n_joint,
                           double* gamma) {
  return guarded([&] {
    need(game, "game");
    if (n_agents) *n_agents = game->game->n_agents();
    if (n_states) *n_states = game->game->n_states();
    if (n_joint) *n_joint = game->game->n_joint();
    if (gamma) *gamma = game->game->gamma();
    return HARL_OK;
  });
}

harl_status harl_game_n_actions(const harl_game* game, int agent, int* out) {
  return guarded([&] {
    need(game, "game");
    need(out, "out");
    harl::require(agent >= 0 && agent < game->game->n_agents(), "agent out of range");
    *out = game->game->n_actions(agent);
    return HARL_OK;
  });
}

harl_status harl_game_to_json(const harl_game* game, char** out) {
  return guarded([&] {
    need(game, "game");
    need(out, "out");
    *out = dup_string(harl::game_to_json(*game->game).dump());
    return HARL_OK;
  });
}

harl_status harl_game_optimal_return(const harl_game* game, double* out) {
  return guarded([&] {
    need(game, "game");
    need(out, "out");
    *out = harl::optimal_joint(*game->game).J;
    return HARL_OK;
  });
}

harl_status harl_policy_uniform(const harl_game* game, harl_policy** out) {
  return guarded([&] {
    need(game, "game");
    need(out, "out");
    *out = new harl_policy{harl::uniform_joint_policy(*game->game)};
    return HARL_OK;
  });
}

harl_status harl_policy_deterministic(const harl_game* game, const int* joint_actions,
                                      harl_policy** out) {
  return guarded([&] {
    need(game, "game");
    need(joint_actions, "joint_actions");
    need(out, "out");
    std::vector<int> j(joint_actions, joint_actions + game->game->n_states());
    *out = new harl_policy{harl::deterministic_joint_policy(*game->game, j)};
    return HARL_OK;
  });
}

harl_status harl_policy_from_json(const harl_game* game, const char* json, harl_policy** out) {
  return guarded([&] {
    need(game, "game");
    need(out, "out");
    auto pi = harl::policy_from_json(parse(json, "policy json"));
    harl::check_policy(*game->game, pi);
    *out = new harl_policy{std::move(pi)};
    return HARL_OK;
  });
}

harl_status harl_policy_to_json(const harl_policy* policy, char** out) {
  return guarded([&] {
    need(policy, "policy");
    need(out, "out");
    *out = dup_string(harl::policy_to_json(policy->policy).dump());
    return HARL_OK;
  });
}

void harl_policy_destroy(harl_policy* policy) { delete policy; }

harl_status harl_policy_prob(const harl_policy* policy, int agent, int state, int action,
                             double* out) {
  return guarded([&] {
    need(policy, "policy");
    need(out, "out");
    harl::require(agent >= 0 && agent < static_cast<int>(policy->policy.size()),
                  "agent out of range");
    const auto& p = policy->policy[agent];
    harl::require(state >= 0 && state < p.n_states() && action >= 0 && action < p.n_actions(),
                  "state or action out of range");
    *out = p(state, action);
    return HARL_OK;
  });
}

harl_status harl_evaluate(const harl_game* game, const harl_policy* policy, double* J) {
  return guarded([&] {
    need(game, "game");
    need(policy, "policy");
    need(J, "J");
    *J = harl::evaluate(*game->game, policy->policy).J;
    return HARL_OK;
  });
}

harl_status harl_best_response_gaps(const harl_game* game, const harl_policy* policy,
                                    double* gaps, int n_gaps) {
  return guarded([&] {
    need(game, "game");
    need(policy, "policy");
    need(gaps, "gaps");
    harl::require(n_gaps >= game->game->n_agents(), "gaps buffer too small");
    auto br = harl::best_response_gap(*game->game, policy->policy);
    for (std::size_t i = 0; i < br.gaps.size(); ++i) gaps[i] = br.gaps[i];
    return HARL_OK;
  });
}

harl_status harl_policy_iteration(const harl_game* game, harl_policy* policy, int rounds,
                                  uint64_t seed, double* J_trace) {
  return guarded([&] {
    need(game, "game");
    need(policy, "policy");
    harl::require(rounds >= 0, "rounds must be nonnegative");
    harl::TrustRegionConfig cfg;
    cfg.max_outer_iters = rounds;
    harl::PermutationSampler sampler(game->game->n_agents(), seed);
    auto res = harl::policy_iteration(*game->game, policy->policy, sampler, cfg);
    if (J_trace)
      for (std::size_t k = 0; k < res.J.size(); ++k) J_trace[k] = res.J[k];
    policy->policy = std::move(res.policy);
    return HARL_OK;
  });
}

harl_status harl_trainer_create(const char* env_json, const char* train_json, uint64_t seed,
                                harl_trainer** out) {
  return guarded([&] {
    need(out, "out");
    auto env = harl::make_environment(parse(env_json, "env_json"), seed);
    auto train = parse(train_json, "train_json");
    auto t = std::make_unique<harl_trainer>();
    if (harl::is_offpolicy_algorithm(harl::json_value<std::string>(train, "algorithm", "")))
      t->off = std::make_unique<harl::OffPolicyTrainer>(
          *env, harl::offpolicy_config_from_json(train), seed);
    else
      t->on = std::make_unique<harl::OnPolicyTrainer>(*env, harl::train_config_from_json(train),
                                                       seed);
    t->env = std::move(env);
    *out = t.release();
    return HARL_OK;
  });
}

void harl_trainer_destroy(harl_trainer* trainer) { delete trainer; }

harl_status harl_trainer_run(harl_trainer* trainer, char** result_json) {
  return guarded([&] {
    need(trainer, "trainer");
    need(result_json, "result_json");
    nlohmann::json doc;
    std::ostringstream csv;
    if (trainer->off) {
      auto res = trainer->off->run();
      csv << harl::off_curve_header() << "\n";
      for (const auto& r : res.curve) csv << harl::off_curve_row_csv(r) << "\n";
      doc["final_return"] = res.final_return_mean;
      doc["env_steps"] = res.env_steps;
      if (res.has_exact) doc["exact_return"] = res.exact_return;
    } else {
      auto res = trainer->on->run();
      csv << harl::curve_header() << "\n";
      for (const auto& r : res.curve) csv << harl::curve_row_csv(r) << "\n";
      doc["final_return"] = res.final_return_mean;
      doc["env_steps"] = res.env_steps;
      if (res.policy) {
        doc["exact_return"] = res.exact_J;
        doc["greedy_exact_return"] = res.greedy_J;
      }
    }
    doc["csv"] = csv.str();
    *result_json = dup_string(doc.dump());
    return HARL_OK;
  });
}

harl_status harl_cmd_train(const char* config_path, const uint64_t* seeds, size_t n_seeds,
                           const char* out_dir, char** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out, "report");
    auto cfg = harl::load_run_config(config_path);
    if (seeds && n_seeds > 0) cfg.seeds.assign(seeds, seeds + n_seeds);
    if (out_dir && *out_dir) cfg.out_dir = out_dir;
    return report(harl::cmd_train(cfg), out);
  });
}

harl_status harl_cmd_exact_iter(const char* config_path, const char* out_dir, char** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out, "report");
    auto cfg = harl::load_run_config(config_path);
    if (out_dir && *out_dir) cfg.out_dir = out_dir;
    return report(harl::cmd_exact_iter(cfg), out);
  });
}

harl_status harl_cmd_repro(const char* which, int n, char** out) {
  return guarded([&] {
    need(which, "which");
    need(out, "report");
    if (n > 0) return report(harl::cmd_repro(which, {n}), out);
    return report(harl::cmd_repro(which), out);
  });
}

harl_status harl_cmd_verify_ne(const char* config_path, const char* policy_path,
                               double tolerance, char** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(policy_path, "policy_path");
    need(out, "report");
    auto cfg = harl::load_run_config(config_path);
    return report(harl::cmd_verify_ne(cfg, policy_path, tolerance), out);
  });
}

harl_status harl_cmd_props(const char* suites, uint64_t seed, char** out) {
  return guarded([&] {
    need(out, "report");
    std::vector<std::string> names;
    std::stringstream ss(suites ? suites : "");
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) names.push_back(item);
    return report(harl::cmd_props(names, seed), out);
  });
}

harl_status harl_cmd_export_game(const char* config_path, const char* out_path, char** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out_path, "out_path");
    need(out, "report");
    auto cfg = harl::load_run_config(config_path);
    return report(harl::cmd_export_game(cfg, out_path), out);
  });
}

}  // extern "C"
