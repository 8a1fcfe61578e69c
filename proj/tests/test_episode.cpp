#include <limits>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mrss/episode.hpp"
#include "mrss/error.hpp"
#include "mrss/policy.hpp"
#include "mrss/trainer.hpp"
#include "oracles.hpp"

using namespace mrss;

namespace {

ActionSource random_actions(const Roster& roster, double spread = 1.5) {
  return [roster, spread](int agent, int, const Observation&, Rng& rng) {
    Decision d;
    d.raw.resize(action_dims(roster.kind_of(agent)));
    for (double& v : d.raw) v = uniform(rng, -spread, spread);
    return d;
  };
}

UncertaintyConfig crowded(std::uint64_t seed) {
  UncertaintyConfig c;
  c.arena = {{0, 0, 0}, {10, 10, 5}};
  c.spawn_region = c.arena;
  c.position_mean = {5, 5, 0};
  c.position_std = {2, 2, 0};
  c.count_range = {1, 2};
  c.size_range = {2, 3};
  c.shape_irregularity = 0.5;
  c.roster = {2, 2};
  c.spawn_clearance = 0.4;
  c.seed = seed;
  return c;
}

std::string dump(const RolloutBuffer& b) {
  std::ostringstream os;
  write_rollout(os, b);
  return os.str();
}

}  // namespace

TEST_CASE("compute_rewards examples") {
  CHECK(compute_rewards(5, {}) == 5);
  std::vector<CollisionEvent> one{{0, CollisionEvent::kObject}};
  CHECK(compute_rewards(0, one) == -1);
  std::vector<CollisionEvent> two{{0, 1}, {2, CollisionEvent::kObject}};
  CHECK(compute_rewards(3, two) == 1);
}

TEST_CASE("success_rate") {
  std::vector<EpisodeMetrics> m(100);
  for (auto& x : m) x.success = true;
  CHECK(success_rate(m) == 1.0);
  for (int i = 87; i < 100; ++i) m[i].success = false;
  CHECK(success_rate(m) == doctest::Approx(0.87));
  std::vector<EpisodeMetrics> none;
  CHECK_THROWS_AS(success_rate(none), InvalidArgument);
}

TEST_CASE("episode config validation") {
  EpisodeConfig c;
  c.horizon = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.success_threshold = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.success_threshold = 1.01;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("zero-mean noiseless policy keeps robots still") {
  auto task = sample_task(crowded(3));
  Scene scene(task);
  TrainSetup setup;
  setup.roster = {2, 2};
  TeamParams zero;
  for (int k = 0; k < kKindCount; ++k) zero.by_kind[k] = ParamSet(net_config(setup, RobotKind(k)));
  EpisodeConfig cfg;
  cfg.horizon = 20;
  cfg.deterministic = true;
  auto res = run_episode(scene, zero, cfg, 1);

  std::set<int> visible;
  for (const auto& sp : task.spawns) {
    auto s = spawn_state(sp);
    auto v = oracle::visible_cells(scene, s, default_spec(sp.kind));
    visible.insert(v.begin(), v.end());
  }
  REQUIRE(res.buffer.steps() == 20);
  CHECK(res.buffer.rewards[0] == int(visible.size()));
  for (int t = 1; t < 20; ++t) CHECK(res.buffer.rewards[t] == 0);
  for (std::size_t i = 0; i < task.spawns.size(); ++i)
    CHECK(res.buffer.agents[i].back().state.position == task.spawns[i].position);
}

TEST_CASE("scripted quadcopter sweep covers an edge-2 cube") {
  TaskSpec t;
  t.arena = {{0, 0, 0}, {8, 8, 4}};
  ObjectDesc cube;
  cube.origin = {3, 3, 0};
  cube.edge = 2;
  cube.parts = {{{0, 0, 0}, {2, 2, 2}}};
  t.objects = {cube};
  t.spawns = {{RobotKind::Quadcopter, {1, 1, 2.5}, 0.0}};
  Scene scene(t);
  REQUIRE(scene.cell_count() == 20);

  // East for 60 steps, then north for 60, then west for 60; dt = 1 s gives 0.1 m per step.
  ActionSource sweep = [](int, int step, const Observation&, Rng&) {
    Decision d;
    d.raw.assign(5, 0.0);
    if (step < 60) d.raw[0] = 1.0;
    else if (step < 120) d.raw[1] = 1.0;
    else d.raw[0] = -1.0;
    return d;
  };
  EpisodeConfig cfg;
  cfg.horizon = 180;
  cfg.dt = 1.0;
  auto res = run_episode(scene, sweep, {}, cfg, 0);
  CHECK(res.metrics.coverage == 1.0);
  CHECK(res.metrics.success);
  CHECK(res.buffer.terminal);
  CHECK(res.metrics.steps < 180);
  CHECK(res.metrics.total_collisions == 0);
  CHECK(res.metrics.scanned_by_kind[1] == 20);
}

TEST_CASE("reward ledger, coverage monotonicity and safety over random rollouts") {
  int collisions = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto task = sample_task(crowded(seed));
    Scene scene(task);
    const Roster roster{2, 2};
    EpisodeConfig cfg;
    cfg.horizon = 150;
    cfg.dt = 1.0;
    auto res = run_episode(scene, random_actions(roster), {}, cfg, seed);
    const auto& b = res.buffer;

    long long sum = 0, fresh = 0, events = 0;
    for (int t = 0; t < b.steps(); ++t) {
      sum += b.rewards[t];
      fresh += b.newly_scanned[t];
      events += b.collisions[t].size();
      CHECK(b.newly_scanned[t] >= 0);
      CHECK(b.rewards[t] == b.newly_scanned[t] - int(b.collisions[t].size()));
    }
    CHECK(sum == fresh - events);
    CHECK(sum == b.episode_return);
    CHECK(fresh == scene.occupied_count());
    CHECK(res.metrics.coverage == scene.coverage_fraction());
    CHECK(res.metrics.scanned_by_kind[0] + res.metrics.scanned_by_kind[1] >= res.metrics.total_scanned);
    collisions += int(events);

    const auto specs = roster_specs(roster);
    for (std::size_t i = 0; i < b.agents.size(); ++i) {
      CHECK(int(b.agents[i].size()) == res.metrics.steps);
      for (const auto& a : b.agents[i]) {
        CHECK(in_safe_set(a.state, scene, specs[i]));
        for (double c : a.clamped) CHECK(std::abs(c) <= 1.0);
        for (std::size_t k = 0; k < a.clamped.size(); ++k)
          CHECK(std::abs(a.command.u[k]) <= specs[i].limits[k]);
      }
    }
    for (const auto& row : b.collisions) {
      std::set<std::pair<int, int>> pairs;
      for (auto e : row) pairs.insert({e.robot, e.other});
      CHECK(pairs.size() == row.size());
    }
  }
  CHECK(collisions > 0);
}

TEST_CASE("observation length is constant over an episode") {
  auto task = sample_task(crowded(8));
  Scene scene(task);
  EpisodeConfig cfg;
  cfg.horizon = 1000;
  cfg.scheme = scheme_from_index(7);
  auto res = run_episode(scene, random_actions({2, 2}), {}, cfg, 4);
  for (std::size_t i = 0; i < res.buffer.agents.size(); ++i) {
    const auto kind = res.buffer.roster.kind_of(int(i));
    for (const auto& a : res.buffer.agents[i])
      REQUIRE(a.obs.values.size() == observation_size(kind, cfg.scheme, 4));
  }
}

TEST_CASE("episodes are deterministic in their seed") {
  auto task = sample_task(crowded(2));
  TrainSetup setup;
  setup.roster = {2, 2};
  setup.arch.hidden = 16;
  setup.arch.feature = 8;
  setup.arch.critic_hidden = {16};
  auto params = init_team(setup, 5);
  EpisodeConfig cfg;
  cfg.horizon = 40;
  auto a = run_episode(Scene(task), params, cfg, 11);
  auto b = run_episode(Scene(task), params, cfg, 11);
  auto c = run_episode(Scene(task), params, cfg, 12);
  CHECK(dump(a.buffer) == dump(b.buffer));
  CHECK(dump(a.buffer) != dump(c.buffer));
  for (const auto& agent : a.buffer.agents)
    for (const auto& s : agent) CHECK(std::isfinite(s.value));
}

TEST_CASE("non-finite actions name the agent and step") {
  auto task = sample_task(crowded(1));
  ActionSource bad = [](int agent, int step, const Observation&, Rng&) {
    Decision d;
    d.raw.assign(agent < 2 ? 3 : 5, 0.0);
    if (agent == 1 && step == 3) d.raw[0] = std::numeric_limits<double>::quiet_NaN();
    return d;
  };
  Scene scene(task);
  try {
    run_episode(scene, bad, {}, EpisodeConfig{}, 0);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    std::string msg = e.what();
    CHECK(msg.find("agent 1") != std::string::npos);
    CHECK(msg.find("step 3") != std::string::npos);
  }
}
