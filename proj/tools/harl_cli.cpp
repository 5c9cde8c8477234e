// Command-line front end over the C API.
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "harl/harl.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

int finish(harl_status status, char*& report) {
  bool had_report = report != nullptr;
  if (report) {
    std::printf("%s\n", report);
    harl_string_free(report);
    report = nullptr;
  }
  if (status == HARL_OK) return kExitOk;
  if (status != HARL_ERR_CHECK_FAILED || !had_report)
    std::fprintf(stderr, "error (%s): %s\n", harl_status_name(status), harl_last_error());
  return status == HARL_ERR_CONFIG ? kExitConfig : kExitFailure;
}

bool parse_seeds(const std::string& text, std::vector<std::uint64_t>& out) {
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) return false;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      return false;
    }
  }
  return !out.empty();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous-agent reinforcement learning toolkit"};
  app.require_subcommand(1);

  std::string config, out, seeds_text, policy, which;
  std::vector<std::string> suites;
  double tolerance = 1e-6;
  int n = 0;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "Train on-policy or off-policy agents");
  train->add_option("--config", config, "Experiment JSON")->required();
  train->add_option("--seed", seeds_text, "Seed list N[,N...]");
  train->add_option("--out", out, "Output directory");

  auto* exact = app.add_subcommand("exact-iter", "Exact tabular policy iteration");
  exact->add_option("--config", config, "Experiment JSON")->required();
  exact->add_option("--out", out, "Output directory");

  auto* repro = app.add_subcommand("repro", "Reproduce a counterexample");
  repro->add_option("case", which, "example2, xor or diffgame")->required();
  repro->add_option("--n", n, "Number of agents for xor");

  auto* verify = app.add_subcommand("verify-ne", "Best-response gaps of a policy");
  verify->add_option("--config", config, "Experiment JSON naming the environment")->required();
  verify->add_option("--policy", policy, "Policy JSON or checkpoint manifest")->required();
  verify->add_option("--tolerance", tolerance, "Largest accepted gap");

  auto* props = app.add_subcommand("props", "Run property suites");
  props->add_option("suites", suites, "Suite names (default: all)");
  props->add_option("--seed", seed, "Fixture seed");

  auto* exp = app.add_subcommand("export-game", "Write a tabular game as JSON");
  exp->add_option("--config", config, "Experiment JSON naming the environment")->required();
  exp->add_option("--out", out, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  char* report = nullptr;
  harl_status st = HARL_ERR_CONFIG;
  if (train->parsed()) {
    std::vector<std::uint64_t> seeds;
    if (!seeds_text.empty() && !parse_seeds(seeds_text, seeds)) {
      std::fprintf(stderr, "error (config): bad --seed list '%s'\n", seeds_text.c_str());
      return kExitConfig;
    }
    st = harl_cmd_train(config.c_str(), seeds.empty() ? nullptr : seeds.data(), seeds.size(),
                        out.c_str(), &report);
  } else if (exact->parsed()) {
    st = harl_cmd_exact_iter(config.c_str(), out.c_str(), &report);
  } else if (repro->parsed()) {
    st = harl_cmd_repro(which.c_str(), n, &report);
  } else if (verify->parsed()) {
    st = harl_cmd_verify_ne(config.c_str(), policy.c_str(), tolerance, &report);
  } else if (props->parsed()) {
    std::string joined;
    for (const auto& s : suites) joined += (joined.empty() ? "" : ",") + s;
    st = harl_cmd_props(joined.c_str(), seed, &report);
  } else if (exp->parsed()) {
    st = harl_cmd_export_game(config.c_str(), out.c_str(), &report);
  }
  return finish(st, report);
}
