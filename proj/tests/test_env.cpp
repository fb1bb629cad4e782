#include <doctest.h>

#include <memory>

#include "fixtures.hpp"
#include "mhs/env.hpp"

using namespace mhs;
using namespace mhs::test;

namespace {

Env make_default_env(int64_t steps = 36000) {
  auto topo = std::make_shared<const Topology>(Topology::default_preset());
  EnvConfig cfg;
  cfg.episode_steps = steps;
  return Env(topo, DemandModel::defaults(*topo), cfg);
}

// four incoming points on one loop, no junctions: a 4-agent environment
Env make_four_agent_env(int64_t steps) {
  ConfigDoc doc;
  doc.add_row("loops", {"L"});
  for (int i = 0; i < 4; ++i) {
    std::string id = "i" + std::to_string(i);
    doc.add_row("nodes", {id, "incoming", "L", "2", "0.5"});
    doc.add_row("nodes", {"s" + std::to_string(i), "storage", "L", "2", "1.0"});
  }
  doc.add_row("nodes", {"o", "outgoing", "L", "2", "0.6"});
  std::vector<std::string> order = {"i0", "s0", "i1", "s1", "i2",
                                    "s2", "i3", "s3", "o"};
  for (size_t k = 0; k < order.size(); ++k) {
    const std::string& a = order[k];
    const std::string& b = order[(k + 1) % order.size()];
    doc.add_row("segments", {a + "-" + b, a, b, "10"});
  }
  auto topo = std::make_shared<const Topology>(Topology::from_document(doc));
  EnvConfig cfg;
  cfg.episode_steps = steps;
  cfg.total_pallets = 20;
  return Env(topo, DemandModel::zero(*topo), cfg);
}

int32_t random_action(const Env& env, int agent, Rng& rng) {
  return static_cast<int32_t>(
      rng.next_below(env.agents()[agent].action_dim));
}

}  // namespace

TEST_CASE("reset: determinism and zero-point feature encodings") {
  Env env = make_default_env();
  StepResult a = env.reset(42);
  uint64_t fp_a = state_fingerprint(env.state());
  StepResult b = env.reset(42);
  CHECK(fp_a == state_fingerprint(env.state()));
  CHECK(a.reward == 0.0);
  CHECK_FALSE(a.done);
  CHECK(a.clock == 0);
  CHECK(a.event == b.event);

  CHECK(env.agent_count() == 8);  // 4 receiving + 4 junction
  CHECK(env.obs_dim() == 45);
  Observation obs = env.observe(0);
  REQUIRE(obs.size() == 45);
  CHECK(obs[0] == 0.0);  // identifier of agent 0
  for (int k = 1; k <= 20; ++k) CHECK(obs[k] == 0.0);       // heading
  for (int k = 21; k <= 24; ++k) CHECK(obs[k] == 0.0);      // junctions
  for (int k = 25; k <= 44; ++k) CHECK(obs[k] == 0.5);      // out - in at midpoint
}

TEST_CASE("episode terminates exactly at the configured step count") {
  Env env = make_default_env(36000);
  StepResult res = env.reset(3);
  Rng rng(10);
  int64_t steps = 0;
  while (!res.done) {
    std::vector<std::pair<int, int>> actions;
    for (int agent = 0; agent < env.agent_count(); ++agent)
      if (res.event[agent])
        actions.push_back({agent, random_action(env, agent, rng)});
    res = env.step(actions);
    ++steps;
    if (steps < 36000) REQUIRE_FALSE(res.done);
  }
  CHECK(steps == 36000);
  CHECK(res.clock == 36000);
  CHECK_THROWS_AS(env.step({}), RuntimeFailure);  // stepping past done
}

TEST_CASE("action contract violations carry distinct errors") {
  Env env = make_four_agent_env(500);
  StepResult res = env.reset(5);
  Rng rng(1);
  // run until some agent flags
  while (true) {
    int flagged = -1;
    for (int a = 0; a < env.agent_count(); ++a)
      if (res.event[a]) flagged = a;
    if (flagged >= 0) {
      // out-of-range: 4 storages, action 4 invalid
      CHECK_THROWS_WITH_AS(env.step({{flagged, 4}}),
                           doctest::Contains("out of range"), RuntimeFailure);
      // missing
      CHECK_THROWS_WITH_AS(env.step({}), doctest::Contains("missing action"),
                           RuntimeFailure);
      // extra action for a quiet agent
      int quiet = (flagged + 1) % env.agent_count();
      CHECK_THROWS_WITH_AS(env.step({{flagged, 0}, {quiet, 0}}),
                           doctest::Contains("no pending decision"),
                           RuntimeFailure);
      // unknown agent id
      CHECK_THROWS_AS(env.step({{99, 0}}), RuntimeFailure);
      break;
    }
    res = env.step({});
  }
}

TEST_CASE("dispatch action maps to the chosen storage point") {
  Env env = make_default_env(36000);
  StepResult res = env.reset(8);
  while (true) {
    int flagged = -1;
    for (int a = 0; a < 4; ++a)
      if (res.event[a]) flagged = a;
    std::vector<std::pair<int, int>> actions;
    if (flagged >= 0) {
      int pallet = res.decision_pallet[flagged];
      res = env.step({{flagged, 5}});
      const Pallet& p = env.state().pallets[pallet];
      CHECK(p.dest == env.topology().storage_nodes()[5]);
      CHECK(env.state().heading_to_storage[5] == 1);
      break;
    }
    for (int a = 4; a < env.agent_count(); ++a)
      if (res.event[a]) actions.push_back({a, 0});
    res = env.step(actions);
  }
}

TEST_CASE("observation normalization endpoints") {
  Env four = make_four_agent_env(100);
  four.reset(1);
  CHECK(four.agent_count() == 4);
  CHECK(four.observe(0)[0] == 0.0);
  CHECK(four.observe(3)[0] == doctest::Approx(1.0));
  CHECK(four.observe(1)[0] == doctest::Approx(1.0 / 3));

  SUBCASE("junction occupancy at capacity reads 1.0") {
    auto topo = std::make_shared<const Topology>(test::two_loop());
    EnvConfig cfg;
    cfg.episode_steps = 100;
    cfg.total_pallets = 4;
    Env env(topo, DemandModel::zero(*topo), cfg);
    env.reset(2);
    SimState& st = env.mutable_state();
    int cross = seg_id(*topo, "j0-j1");
    place_on_segment(st, *topo, 0, cross, 2, Phase::InTransitEmptyDirected);
    place_on_segment(st, *topo, 1, cross, 5, Phase::InTransitEmptyDirected);
    env.step({});  // refresh features
    Observation obs = env.observe(0);
    // layout: 1 identifier + 2 heading + 2 junctions + 2 diffs
    REQUIRE(obs.size() == 7);
    CHECK(obs[3] == doctest::Approx(1.0));  // j0 crossing at capacity 2
  }
}

TEST_CASE("observations stay inside the unit interval under fuzzing") {
  Env env = make_default_env(36000);
  Rng rng(77);
  int64_t checked = 0;
  for (uint64_t seed : {11u, 12u, 13u}) {
    StepResult res = env.reset(seed);
    while (!res.done && checked < 110000) {
      std::vector<std::pair<int, int>> actions;
      for (int agent = 0; agent < env.agent_count(); ++agent)
        if (res.event[agent])
          actions.push_back({agent, random_action(env, agent, rng)});
      res = env.step(actions);
      Observation obs = env.observe(static_cast<int>(checked % 8));
      for (double v : obs) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
      ++checked;
    }
  }
  CHECK(checked >= 100000);
}

TEST_CASE("agents share the global state up to the identifier") {
  Env env = make_default_env();
  env.reset(21);
  Rng rng(3);
  StepResult res = env.step({});
  for (int i = 0; i < 300; ++i) {
    std::vector<std::pair<int, int>> actions;
    for (int agent = 0; agent < env.agent_count(); ++agent)
      if (res.event[agent])
        actions.push_back({agent, random_action(env, agent, rng)});
    res = env.step(actions);
  }
  Observation base = env.observe(0);
  for (int agent = 1; agent < env.agent_count(); ++agent) {
    Observation other = env.observe(agent);
    for (size_t k = 1; k < base.size(); ++k) CHECK(other[k] == base[k]);
    CHECK(other[0] == doctest::Approx(agent / 7.0));
  }
}

TEST_CASE("event indicators match the simulator's pending decisions") {
  Env env = make_default_env(36000);
  StepResult res = env.reset(15);
  Rng rng(9);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::pair<int, int>> actions;
    for (int agent = 0; agent < env.agent_count(); ++agent)
      if (res.event[agent])
        actions.push_back({agent, random_action(env, agent, rng)});
    res = env.step(actions);
    // replay oracle: a flag is raised iff the sim holds a fresh decision
    for (int agent = 0; agent < env.agent_count(); ++agent) {
      int node = env.agents()[agent].node;
      const PendingDecision& pd = env.state().pending[node];
      bool fresh = pd.pallet >= 0 && pd.raised_at == env.state().clock;
      CHECK(static_cast<bool>(res.event[agent]) == fresh);
      if (fresh) CHECK(res.decision_pallet[agent] == pd.pallet);
    }
  }
}
