#include "doctest.h"
#include "harl/props.hpp"

using namespace harl;

TEST_SUITE("props") {

TEST_CASE("fixture games stay within the size limits") {
  Rng rng(5);
  for (int k = 0; k < 30; ++k) {
    auto g = random_fixture_game(rng);
    CHECK(g.n_agents() >= 2);
    CHECK(g.n_agents() <= 3);
    CHECK(g.n_states() <= 5);
    for (int i = 0; i < g.n_agents(); ++i) CHECK(g.n_actions(i) <= 3);
    CHECK_NOTHROW(g.validate());
  }
}

TEST_CASE("every suite passes on a second seed") {
  for (const auto& name : suite_names()) {
    CAPTURE(name);
    auto v = run_suite(name, 17);
    CHECK(v.passed);
    auto doc = v.to_json();
    CHECK(doc.at("suite") == name);
    CHECK(doc.at("passed").get<bool>());
  }
}

TEST_CASE("unknown suite is a config error") {
  CHECK_FALSE(is_suite("bogus"));
  try {
    run_suite("bogus", 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
}

}
