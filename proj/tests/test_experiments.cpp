#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "harl/env.hpp"
#include "harl/experiments.hpp"
#include "harl/json_io.hpp"

using namespace harl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("harl_exp_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunConfig small_run(const std::string& algorithm, const json& env, const fs::path& out) {
  json doc{{"algorithm", algorithm},
           {"env", env},
           {"seeds", {0, 1}},
           {"out_dir", out.string()},
           {"train",
            {{"n_rollout_threads", 2}, {"num_env_steps", 400}, {"hidden_sizes", {8}},
             {"critic_hidden_sizes", {8}}}}};
  if (algorithm == "happo") doc["train"]["episode_length"] = 20;
  if (algorithm == "hatd3") {
    doc["train"]["warmup_steps"] = 100;
    doc["train"]["batch_size"] = 16;
    doc["train"]["train_interval"] = 5;
    doc["train"]["log_interval"] = 100;
  }
  return run_config_from_json(doc);
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("train writes csv, checkpoint and summary") {
  auto out = scratch_dir("train");
  auto cfg = small_run("happo", {{"name", "xor"}, {"n", 2}}, out);
  auto rep = cmd_train(cfg);
  CHECK(rep.at("passed").get<bool>());
  auto csv = slurp(out / "happo_seed0.csv");
  CHECK(csv.substr(0, csv.find('\n')) ==
        "round,env_steps,return_mean,return_std,agent,kl_mean,surrogate,clip_frac");
  CHECK(fs::exists(out / "happo_seed1.ckpt.json"));
  CHECK(fs::exists(out / "happo_seed1.ckpt.bin"));
  auto summary = read_json_file((out / "summary.json").string());
  CHECK(summary.at("runs").size() == 2);
  CHECK(summary.at("runs")[0].contains("timing"));

  // Same config and seed, same bytes.
  auto out2 = scratch_dir("train2");
  cfg.out_dir = out2.string();
  cmd_train(cfg);
  CHECK(slurp(out2 / "happo_seed0.csv") == csv);

  // The checkpoint feeds verify-ne.
  auto ne = cmd_verify_ne(cfg, (out / "happo_seed0.ckpt.json").string(), 10.0);
  CHECK(ne.at("gaps").size() == 2);
}

TEST_CASE("off-policy train uses the extended header") {
  auto out = scratch_dir("off");
  auto cfg = small_run("hatd3", {{"name", "target_matching"}}, out);
  cfg.seeds = {3};
  auto rep = cmd_train(cfg);
  auto csv = slurp(out / "hatd3_seed3.csv");
  CHECK(csv.substr(0, csv.find('\n')) ==
        "round,env_steps,return_mean,return_std,agent,kl_mean,surrogate,clip_frac,critic_loss,q_mean");
  CHECK(rep.at("runs")[0].contains("exact_return"));
}

TEST_CASE("config errors") {
  auto expect_config = [](const json& doc) {
    try {
      run_config_from_json(doc);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::config);
    }
  };
  expect_config({{"algorithm", "happo"}});
  expect_config({{"env", {{"name", "xor"}}}, {"seedz", {1}}});
  expect_config({{"env", json::object()}});
  auto cfg = run_config_from_json({{"env", {{"name", "xor"}, {"n", 2}}},
                                   {"train", {{"ppo_epochs", 3}}}});
  CHECK_THROWS_AS(cmd_train(cfg), Error);
}

TEST_CASE("verify-ne on the matrix game") {
  auto dir = scratch_dir("ne");
  auto cfg = run_config_from_json({{"env", {{"name", "example2"}}}});
  auto write = [&](const std::string& name, const JointPolicy& pi) {
    auto p = (dir / name).string();
    write_text_file(p, policy_to_json(pi).dump());
    return p;
  };
  JointPolicy good{TabularPolicy::deterministic(1, 2, {1}), TabularPolicy::deterministic(1, 2, {0})};
  auto rep = cmd_verify_ne(cfg, write("good.json", good), 1e-6);
  CHECK(rep.at("passed").get<bool>());
  JointPolicy bad{TabularPolicy::deterministic(1, 2, {1}), TabularPolicy::deterministic(1, 2, {1})};
  rep = cmd_verify_ne(cfg, write("bad.json", bad), 1e-6);
  CHECK_FALSE(rep.at("passed").get<bool>());
  CHECK(rep.at("gaps")[0].get<double>() == doctest::Approx(3.0));
  CHECK(rep.at("gaps")[1].get<double>() == doctest::Approx(3.0));

  auto constant = run_config_from_json({{"env", {{"name", "constant"}, {"n_agents", 3}, {"n_actions", 2}, {"value", 1.0}}}});
  JointPolicy uni(3, TabularPolicy(1, 2));
  CHECK(cmd_verify_ne(constant, write("uni.json", uni), 1e-6).at("passed").get<bool>());
}

TEST_CASE("exact iteration report") {
  auto out = scratch_dir("exact");
  auto cfg = run_config_from_json({{"env", {{"name", "example2"}}},
                                   {"exact", {{"mode", "sequential"}, {"init", {0.7, 0.3}}, {"order", {0, 1}}}},
                                   {"trust_region", {{"max_outer_iters", 3}}},
                                   {"out_dir", out.string()}});
  auto rep = cmd_exact_iter(cfg);
  CHECK(rep.at("passed").get<bool>());
  CHECK(rep.at("J").back().get<double>() == doctest::Approx(2.0));
  CHECK(fs::exists(out / "exact_iter.json"));
  cfg.exact["mode"] = "sideways";
  CHECK_THROWS_AS(cmd_exact_iter(cfg), Error);
}

TEST_CASE("repro cases") {
  auto e2 = cmd_repro("example2");
  CHECK(e2.at("passed").get<bool>());
  CHECK(e2.at("J_simultaneous").get<double>() == -1.0);
  CHECK(e2.at("J_sequential").get<double>() == 2.0);
  CHECK(cmd_repro("xor", {2, 4}).at("passed").get<bool>());
  CHECK(cmd_repro("diffgame").at("passed").get<bool>());
  CHECK_THROWS_AS(cmd_repro("nothing"), Error);
}

TEST_CASE("bilinear game rounds") {
  auto sim = diffgame_round(1.0, -1.0, 3.0, false);
  REQUIRE(sim.size() == 2);
  CHECK(sim.back().a1 == 1.0 - 3.0);
  CHECK(sim.back().a2 == -1.0 + 3.0);
  CHECK(sim.back().r < sim.front().r);
  auto seq = diffgame_round(1.0, -1.0, 3.0, true);
  REQUIRE(seq.size() == 3);
  CHECK(seq.back().r > seq.front().r);
}

TEST_CASE("export-game round trips through game_file") {
  auto dir = scratch_dir("export");
  auto path = (dir / "grid.json").string();
  auto cfg = run_config_from_json({{"env", {{"name", "grid_rendezvous"}, {"side", 2}}}});
  auto rep = cmd_export_game(cfg, path);
  CHECK(rep.at("n_states").get<int>() == 16);
  auto game = make_tabular_game({{"name", "game_file"}, {"path", path}});
  CHECK(*game == *make_tabular_game({{"name", "grid_rendezvous"}, {"side", 2}}));
}

TEST_CASE("props command") {
  auto rep = cmd_props({"zero_mean", "estimator"}, 2);
  CHECK(rep.at("passed").get<bool>());
  CHECK(rep.at("suites").size() == 2);
  CHECK_THROWS_AS(cmd_props({"bogus"}, 0), Error);
}

}
