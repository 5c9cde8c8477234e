#include "harl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "harl/env.hpp"
#include "harl/json_io.hpp"
#include "harl/offpolicy.hpp"
#include "harl/onpolicy.hpp"
#include "harl/props.hpp"

namespace harl {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::config, "experiment config must be a JSON object");
  reject_unknown_keys(doc,
                      {"algorithm", "env", "scheme", "seeds", "train", "trust_region", "exact",
                       "out_dir"},
                      "experiment");
  RunConfig c;
  c.algorithm = json_value(doc, "algorithm", c.algorithm);
  if (!doc.contains("env")) fail(ErrorCode::config, "experiment needs an env section");
  c.env = doc.at("env");
  if (!c.env.is_object() || !c.env.contains("name"))
    fail(ErrorCode::config, "environment needs a name");
  c.scheme = json_value(doc, "scheme", c.scheme);
  c.seeds = json_value(doc, "seeds", c.seeds);
  if (c.seeds.empty()) fail(ErrorCode::config, "seeds must not be empty");
  c.train = json_value(doc, "train", c.train);
  c.trust_region = json_value(doc, "trust_region", c.trust_region);
  c.exact = json_value(doc, "exact", c.exact);
  c.out_dir = json_value(doc, "out_dir", c.out_dir);
  for (const auto* section : {&c.train, &c.trust_region, &c.exact})
    if (!section->is_object()) fail(ErrorCode::config, "config sections must be objects");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  json doc;
  try {
    doc = read_json_file(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::io) throw;
    fail(ErrorCode::config, e.what());
  }
  return run_config_from_json(doc);
}

TrustRegionConfig trust_region_config_from_json(const json& doc) {
  reject_unknown_keys(doc,
                      {"penalty_mode", "inner_iters", "inner_tol", "max_outer_iters",
                       "penalty_override", "monotonic_tol", "log_gaps"},
                      "trust_region");
  TrustRegionConfig c;
  auto mode = json_value<std::string>(doc, "penalty_mode", "sum_kl_surrogate");
  if (mode == "sum_kl_surrogate" || mode == "sum-kl-surrogate")
    c.penalty_mode = PenaltyMode::sum_kl_surrogate;
  else if (mode == "max_kl_exact" || mode == "max-kl-exact")
    c.penalty_mode = PenaltyMode::max_kl_exact;
  else
    fail(ErrorCode::config, "unknown penalty_mode '" + mode + "'");
  c.inner_iters = json_value(doc, "inner_iters", c.inner_iters);
  c.inner_tol = json_value(doc, "inner_tol", c.inner_tol);
  c.max_outer_iters = json_value(doc, "max_outer_iters", c.max_outer_iters);
  c.penalty_override = json_value(doc, "penalty_override", c.penalty_override);
  c.monotonic_tol = json_value(doc, "monotonic_tol", c.monotonic_tol);
  c.log_gaps = json_value(doc, "log_gaps", c.log_gaps);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::config, e.what());
  }
  return c;
}

namespace {

json stats_json(const std::vector<double>& xs) {
  if (xs.empty()) return json{{"mean", nullptr}, {"std", nullptr}};
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return json{{"mean", mean}, {"std", std::sqrt(var / static_cast<double>(xs.size()))}};
}

json timing_json(const std::vector<std::vector<double>>& per_round) {
  std::vector<double> mean;
  if (!per_round.empty()) {
    mean.assign(per_round[0].size(), 0.0);
    for (const auto& r : per_round)
      for (std::size_t i = 0; i < r.size(); ++i) mean[i] += r[i];
    for (auto& m : mean) m /= static_cast<double>(per_round.size());
  }
  return json{{"mean_ms_per_agent", mean}, {"per_round_ms", per_round}};
}

std::string seed_stem(const RunConfig& c, std::uint64_t seed) {
  return (fs::path(c.out_dir) / (c.algorithm + "_seed" + std::to_string(seed))).string();
}

json merged_train(const RunConfig& c) {
  json t = c.train;
  t["algorithm"] = c.algorithm;
  if (!c.scheme.empty()) t["scheme"] = c.scheme;
  return t;
}

std::shared_ptr<const CooperativeMarkovGame> require_tabular(const RunConfig& c) {
  auto game = make_tabular_game(c.env);
  if (!game) fail(ErrorCode::config, "command needs a tabular environment");
  return game;
}

JointPolicy initial_policy(const CooperativeMarkovGame& game, const json& init,
                           std::uint64_t seed) {
  if (init.is_string()) {
    auto name = init.get<std::string>();
    if (name == "uniform") return uniform_joint_policy(game);
    if (name == "random") {
      Rng rng(mix_seed(seed, 7));
      return random_joint_policy(game, rng);
    }
    fail(ErrorCode::config, "unknown init '" + name + "'");
  }
  if (init.is_object()) return policy_from_json(init);
  // Per-agent probability of action 0 at every state, for two-action games.
  if (init.is_array()) {
    JointPolicy pi;
    if (static_cast<int>(init.size()) != game.n_agents())
      fail(ErrorCode::config, "init needs one entry per agent");
    for (int i = 0; i < game.n_agents(); ++i) {
      if (game.n_actions(i) != 2) fail(ErrorCode::config, "numeric init needs two actions");
      double p = init[i].get<double>();
      std::vector<double> prob;
      for (int s = 0; s < game.n_states(); ++s) {
        prob.push_back(p);
        prob.push_back(1.0 - p);
      }
      pi.emplace_back(game.n_states(), 2, std::move(prob));
    }
    check_policy(game, pi);
    return pi;
  }
  fail(ErrorCode::config, "bad init");
}

}  // namespace

json cmd_train(const RunConfig& config) {
  fs::create_directories(config.out_dir);
  const bool off = is_offpolicy_algorithm(config.algorithm);
  json runs = json::array();
  std::vector<double> finals, exacts;
  for (std::uint64_t seed : config.seeds) {
    auto env = make_environment(config.env, seed);
    const std::string stem = seed_stem(config, seed);
    std::ostringstream csv;
    json run{{"seed", seed}, {"csv", stem + ".csv"}, {"checkpoint", stem + ".ckpt.json"}};
    json extra{{"algorithm", config.algorithm}, {"env", config.env}, {"n_agents", env->n_agents()}};
    std::vector<CheckpointBlock> blocks;
    if (off) {
      auto tc = offpolicy_config_from_json(merged_train(config));
      OffPolicyTrainer trainer(*env, tc, seed);
      auto res = trainer.run();
      csv << off_curve_header() << "\n";
      for (const auto& row : res.curve) csv << off_curve_row_csv(row) << "\n";
      blocks = trainer.checkpoint_blocks();
      extra["scheme"] = scheme_name(tc.scheme);
      run["final_return"] = res.final_return_mean;
      run["env_steps"] = res.env_steps;
      if (res.has_exact) {
        run["exact_return"] = res.exact_return;
        exacts.push_back(res.exact_return);
      }
      run["timing"] = timing_json(res.update_ms);
      finals.push_back(res.final_return_mean);
    } else {
      auto tc = train_config_from_json(merged_train(config));
      OnPolicyTrainer trainer(*env, tc, seed);
      auto res = trainer.run();
      csv << curve_header() << "\n";
      for (const auto& row : res.curve) csv << curve_row_csv(row) << "\n";
      for (std::size_t i = 0; i < res.actors.size(); ++i)
        blocks.push_back(res.actors[i].checkpoint_block("actor_" + std::to_string(i)));
      CheckpointBlock cb;
      cb.name = "critic";
      cb.widths = res.critic.widths();
      cb.hidden_activation = activation_name(res.critic.hidden_activation());
      cb.output_activation = activation_name(res.critic.output_activation());
      cb.params = res.critic.params();
      blocks.push_back(cb);
      extra["scheme"] = scheme_name(tc.scheme);
      run["final_return"] = res.final_return_mean;
      run["env_steps"] = res.env_steps;
      if (res.policy) {
        run["exact_return"] = res.exact_J;
        run["greedy_exact_return"] = res.greedy_J;
        exacts.push_back(res.exact_J);
      }
      run["timing"] = timing_json(res.update_ms);
      finals.push_back(res.final_return_mean);
    }
    write_text_file(stem + ".csv", csv.str());
    save_checkpoint(stem + ".ckpt.json", stem + ".ckpt.bin", blocks, seed, extra.dump());
    runs.push_back(std::move(run));
  }
  json summary{{"algorithm", config.algorithm},
               {"env", config.env},
               {"seeds", config.seeds},
               {"final_return", stats_json(finals)},
               {"runs", runs},
               {"passed", true}};
  if (!exacts.empty()) summary["exact_return"] = stats_json(exacts);
  write_text_file((fs::path(config.out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  return summary;
}

json cmd_exact_iter(const RunConfig& config) {
  auto game = require_tabular(config);
  auto tr = trust_region_config_from_json(config.trust_region);
  const json& ex = config.exact;
  reject_unknown_keys(ex, {"mode", "init", "drift", "order"}, "exact");
  auto mode = json_value<std::string>(ex, "mode", "sequential");
  const std::uint64_t seed = config.seeds.front();
  JointPolicy pi0 = initial_policy(*game, ex.contains("init") ? ex.at("init") : json("uniform"), seed);
  std::unique_ptr<PermutationSampler> sampler;
  if (ex.contains("order")) {
    auto order = json_value(ex, "order", std::vector<int>{});
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < static_cast<int>(sorted.size()); ++i)
      if (sorted[i] != i || static_cast<int>(sorted.size()) != game->n_agents())
        fail(ErrorCode::config, "order must be a permutation of the agents");
    sampler = std::make_unique<PermutationSampler>(order);
  } else {
    sampler = std::make_unique<PermutationSampler>(game->n_agents(), seed);
  }
  IterationResult res;
  if (mode == "sequential") {
    res = policy_iteration(*game, pi0, *sampler, tr);
  } else if (mode == "simultaneous") {
    res = simultaneous_iteration(*game, pi0, tr);
  } else if (mode == "haml") {
    auto spec = drift_spec_from_name(json_value<std::string>(ex, "drift", "kl_ball"));
    res = haml_iteration(*game, pi0, std::vector<DriftSpec>(game->n_agents(), spec), *sampler, tr);
  } else {
    fail(ErrorCode::config, "unknown exact mode '" + mode + "'");
  }
  auto br = best_response_gap(*game, res.policy);
  bool monotone = true;
  for (std::size_t k = 1; k < res.J.size(); ++k)
    monotone = monotone && res.J[k] >= res.J[k - 1] - tr.monotonic_tol;
  json report{{"mode", mode},
              {"J", res.J},
              {"rounds", json::parse(iteration_log_json(res))},
              {"final_gaps", br.gaps},
              {"policy", policy_to_json(res.policy)},
              {"monotone", monotone},
              {"passed", mode == "simultaneous" || monotone}};
  fs::create_directories(config.out_dir);
  write_text_file((fs::path(config.out_dir) / "exact_iter.json").string(), report.dump(2) + "\n");
  return report;
}

std::vector<DiffGameTrace> diffgame_round(double a1, double a2, double lr, bool sequential) {
  // dr/da1 = a2, dr/da2 = a1.
  std::vector<DiffGameTrace> out{{a1, a2, a1 * a2}};
  double n1 = a1 + lr * a2;
  if (sequential) out.push_back({n1, a2, n1 * a2});
  double n2 = a2 + lr * (sequential ? n1 : a1);
  out.push_back({n1, n2, n1 * n2});
  return out;
}

json cmd_repro(const std::string& which, const std::vector<int>& ns) {
  if (which == "example2") {
    auto game = make_matrix_game_example2();
    JointPolicy pi0;
    for (int i = 0; i < 2; ++i) pi0.emplace_back(1, 2, std::vector<double>{0.7, 0.3});
    TrustRegionConfig cfg;
    cfg.max_outer_iters = 1;
    double j_old = evaluate(game, pi0).J;
    auto sim = simultaneous_iteration(game, pi0, cfg);
    PermutationSampler order(std::vector<int>{0, 1});
    auto seq = policy_iteration(game, pi0, order, cfg);
    double j_min = std::numeric_limits<double>::infinity();
    for (int j = 0; j < game.n_joint(); ++j) j_min = std::min(j_min, game.reward(0, j));
    const double j_sim = sim.J.back(), j_seq = seq.J.back();
    bool pass = std::abs(j_old - 0.75) < 1e-12 && std::abs(j_sim + 1.0) < 1e-12 &&
                std::abs(j_seq - 2.0) < 1e-12 && std::abs(j_sim - j_min) < 1e-12;
    return json{{"case", "example2"},
                {"J_old", j_old},
                {"J_simultaneous", j_sim},
                {"J_sequential", j_seq},
                {"J_min", j_min},
                {"policy_simultaneous", policy_to_json(sim.policy)},
                {"policy_sequential", policy_to_json(seq.policy)},
                {"passed", pass}};
  }
  if (which == "xor") {
    json rows = json::array();
    bool pass = true;
    for (int n : ns) {
      auto game = make_xor_team_game(n);
      double hetero = optimal_joint(game).J;
      // Shared policy: every agent plays action 1 with probability p.
      auto shared_J = [&](double p) {
        JointPolicy pi;
        for (int i = 0; i < n; ++i) pi.emplace_back(1, 2, std::vector<double>{1.0 - p, p});
        return evaluate(game, pi).J;
      };
      double best = 0.0, best_p = 0.0;
      for (int k = 0; k <= 1000; ++k) {
        double p = k / 1000.0;
        double v = shared_J(p);
        if (v > best) best = v, best_p = p;
      }
      double analytic = 2.0 / std::pow(2.0, n);
      double ratio = best / hetero;
      bool ok = std::abs(hetero - 1.0) < 1e-12 && std::abs(best - analytic) < 1e-12 &&
                std::abs(ratio - analytic) < 1e-12;
      pass = pass && ok;
      rows.push_back({{"n", n},
                      {"heterogeneous_optimum", hetero},
                      {"shared_optimum", best},
                      {"shared_argmax_p", best_p},
                      {"analytic_ratio", analytic},
                      {"ratio", ratio},
                      {"passed", ok}});
    }
    return json{{"case", "xor"}, {"results", rows}, {"passed", pass}};
  }
  if (which == "diffgame") {
    const double a1 = 1.0, a2 = -1.0, lr = 3.0;
    auto sim = diffgame_round(a1, a2, lr, false);
    auto seq = diffgame_round(a1, a2, lr, true);
    auto trace = [](const std::vector<DiffGameTrace>& t) {
      json j = json::array();
      for (const auto& p : t) j.push_back({{"a1", p.a1}, {"a2", p.a2}, {"r", p.r}});
      return j;
    };
    double d_sim = sim.back().r - sim.front().r;
    double d_seq = seq.back().r - seq.front().r;
    return json{{"case", "diffgame"},
                {"start", {a1, a2}},
                {"lr", lr},
                {"simultaneous", trace(sim)},
                {"sequential", trace(seq)},
                {"delta_simultaneous", d_sim},
                {"delta_sequential", d_seq},
                {"passed", d_sim < 0.0 && d_seq > 0.0}};
  }
  fail(ErrorCode::config, "unknown repro case '" + which + "'");
}

namespace {

JointPolicy policy_from_checkpoint(const CooperativeMarkovGame& game, const std::string& path) {
  std::string extra_text;
  auto blocks = load_checkpoint(path, &extra_text);
  json extra = json::parse(extra_text);
  const int n = game.n_agents(), S = game.n_states();
  if (json_value(extra, "n_agents", n) != n)
    fail(ErrorCode::config, "checkpoint was trained with a different number of agents");
  auto find = [&](const std::string& name) -> const CheckpointBlock* {
    for (const auto& b : blocks)
      if (b.name == name) return &b;
    return nullptr;
  };
  Mat eye = Mat::Identity(S, S);
  Rng rng(0);
  std::vector<int> joint(S, 0);
  JointPolicy pi;
  const bool shared = find("actor_1") == nullptr && find("actor_0") != nullptr;
  for (int i = 0; i < n; ++i) {
    if (const auto* b = find(shared ? "actor_0" : "actor_" + std::to_string(i))) {
      if (b->widths.front() != S || b->widths.back() != game.n_actions(i) || b->extra != 0)
        fail(ErrorCode::config, "checkpoint actor does not match the game");
      std::vector<int> hidden(b->widths.begin() + 1, b->widths.end() - 1);
      CategoricalPolicy p(S, hidden, game.n_actions(i), activation_from_name(b->hidden_activation),
                          1.0, rng);
      p.set_params(b->params);
      Mat probs = p.probs(eye);
      std::vector<double> flat;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < game.n_actions(i); ++a) flat.push_back(probs(a, s) / probs.col(s).sum());
      pi.emplace_back(S, game.n_actions(i), std::move(flat));
      continue;
    }
    const auto* v = find("q_" + std::to_string(i) + "_value");
    const auto* a = find("q_" + std::to_string(i) + "_advantage");
    if (!v || !a) fail(ErrorCode::config, "checkpoint lacks networks for agent " + std::to_string(i));
    if (v->widths.front() != S || a->widths.back() != game.n_actions(i))
      fail(ErrorCode::config, "checkpoint Q network does not match the game");
    DuelingNet q(S, std::vector<int>(v->widths.begin() + 1, v->widths.end() - 1),
                 std::vector<int>(a->widths.begin() + 1, a->widths.end() - 1), game.n_actions(i),
                 activation_from_name(v->hidden_activation), rng);
    Vec params(v->params.size() + a->params.size());
    params << v->params, a->params;
    q.set_params(params);
    Mat qv = q.q_values(eye);
    std::vector<int> best(S);
    for (int s = 0; s < S; ++s) {
      Eigen::Index k = 0;
      qv.col(s).maxCoeff(&k);
      best[s] = static_cast<int>(k);
    }
    pi.push_back(TabularPolicy::deterministic(S, game.n_actions(i), best));
  }
  check_policy(game, pi);
  return pi;
}

}  // namespace

json cmd_verify_ne(const RunConfig& config, const std::string& policy_path, double tolerance) {
  if (!(tolerance > 0.0)) fail(ErrorCode::config, "tolerance must be positive");
  auto game = require_tabular(config);
  json doc = read_json_file(policy_path);
  JointPolicy pi;
  if (doc.is_object() && doc.value("format", "") == "harl-checkpoint-1") {
    pi = policy_from_checkpoint(*game, policy_path);
  } else {
    try {
      pi = policy_from_json(doc);
      check_policy(*game, pi);
    } catch (const Error& e) {
      fail(ErrorCode::config, std::string("bad policy file: ") + e.what());
    }
  }
  auto br = best_response_gap(*game, pi);
  bool pass = std::all_of(br.gaps.begin(), br.gaps.end(), [&](double g) { return g < tolerance; });
  return json{{"J", br.J},
              {"gaps", br.gaps},
              {"best_response_J", br.best_J},
              {"tolerance", tolerance},
              {"passed", pass}};
}

json cmd_props(const std::vector<std::string>& suites, std::uint64_t seed) {
  std::vector<std::string> names = suites;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = suite_names();
  for (const auto& n : names)
    if (!is_suite(n)) fail(ErrorCode::config, "unknown suite '" + n + "'");
  json verdicts = json::array();
  bool pass = true;
  for (const auto& n : names) {
    auto v = run_suite(n, seed);
    pass = pass && v.passed;
    verdicts.push_back(v.to_json());
  }
  return json{{"seed", seed}, {"suites", verdicts}, {"passed", pass}};
}

json cmd_export_game(const RunConfig& config, const std::string& out_path) {
  auto game = require_tabular(config);
  if (out_path.empty()) fail(ErrorCode::config, "export-game needs an output path");
  write_text_file(out_path, game_to_json(*game).dump() + "\n");
  return json{{"path", out_path},
              {"n_agents", game->n_agents()},
              {"n_states", game->n_states()},
              {"n_joint", game->n_joint()},
              {"passed", true}};
}

}  // namespace harl
