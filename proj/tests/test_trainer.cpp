#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mrss/error.hpp"
#include "mrss/trainer.hpp"
#include "oracles.hpp"

using namespace mrss;

namespace {

TrainSetup tiny_setup(Roster roster = {1, 1}) {
  TrainSetup s;
  s.roster = roster;
  s.arch.hidden = 8;
  s.arch.feature = 4;
  s.arch.critic_hidden = {8};
  s.episode.horizon = 6;
  s.trajectories = 2;
  s.trainer.minibatch = 4;
  s.trainer.mc_samples = 4;
  return s;
}

TaskSpec tiny_task(Roster roster = {1, 1}, std::uint64_t seed = 1) {
  UncertaintyConfig c;
  c.arena = {{0, 0, 0}, {8, 8, 4}};
  c.spawn_region = c.arena;
  c.position_mean = {4, 4, 0};
  c.position_std = {1, 1, 0};
  c.count_range = {1, 1};
  c.size_range = {2, 2};
  c.roster = roster;
  c.quad_spawn_height = 1.5;
  c.seed = seed;
  return sample_task(c);
}

TeamParams perturbed(const TeamParams& p, Rng& rng, double sd) {
  TeamParams q = p;
  for (auto& set : q.by_kind)
    for (double& v : set.values()) v += sd * standard_normal(rng);
  return q;
}

std::vector<RolloutBuffer> rollouts(const TaskSpec& task, const TeamParams& p, const TrainSetup& s,
                                    std::uint64_t seed) {
  std::vector<RolloutBuffer> out;
  for (auto& e : collect(task, p, s, seed)) out.push_back(std::move(e.buffer));
  return out;
}

enum class Part { Total, Policy, Value, Entropy };

Tape::Var pick(const LossGraph& g, Part part) {
  switch (part) {
    case Part::Policy: return g.policy;
    case Part::Value: return g.value;
    case Part::Entropy: return g.entropy;
    default: return g.total;
  }
}

double fd_error(const PreparedBatch& batch, const TeamParams& current, const TrainerConfig& cfg,
                Part part, Rng& rng) {
  std::vector<int> ids(batch.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  LossGraph g = build_loss(batch, ids, current, cfg);
  auto grads = g.tape.backward(pick(g, part));
  std::vector<double> an, fd;
  for (int k = 0; k < kKindCount; ++k) {
    if (current.by_kind[k].empty()) continue;
    std::vector<std::size_t> idx;
    for (int i = 0; i < 12; ++i)
      idx.push_back(std::size_t(uniform_int(rng, 0, int(current.by_kind[k].size()) - 1)));
    for (const auto& s : current.by_kind[k].layout().sections) idx.push_back(s.offset + s.size() - 1);
    auto f = [&](const std::vector<double>& x) {
      TeamParams q = current;
      q.by_kind[k].unflatten(x);
      LossGraph h = build_loss(batch, ids, q, cfg);
      return h.tape.scalar_value(pick(h, part));
    };
    auto d = oracle::central_diff(f, current.by_kind[k].flatten(), idx, 1e-5);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      an.push_back(grads[k][idx[j]]);
      fd.push_back(d[j]);
    }
  }
  return oracle::relative_error(an, fd);
}

}  // namespace

TEST_CASE("gae examples") {
  std::vector<double> r{1, 2, 3}, zero(4, 0.0);
  auto g = compute_gae(r, zero, 1.0, 1.0);
  CHECK(g.advantages == std::vector<double>{6, 5, 3});
  std::vector<double> v{0.5, -1, 2, 0.25};
  auto td = compute_gae(r, v, 0.9, 0.0);
  for (int t = 0; t < 3; ++t) CHECK(td.advantages[t] == doctest::Approx(r[t] + 0.9 * v[t + 1] - v[t]));
  for (int t = 0; t < 3; ++t) CHECK(td.returns[t] == doctest::Approx(td.advantages[t] + v[t]));
  CHECK_THROWS_AS(compute_gae(r, r, 0.9, 0.9), InvalidArgument);
}

TEST_CASE("gae matches the nested-sum oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = uniform_int(rng, 0, 8);
    std::vector<double> r(n), v(n + 1);
    for (auto& x : r) x = standard_normal(rng);
    for (auto& x : v) x = standard_normal(rng);
    const double gamma = uniform(rng, 0.5, 1.0), lambda = uniform(rng, 0.0, 1.0);
    auto g = compute_gae(r, v, gamma, lambda);
    auto want = oracle::gae_nested(r, v, gamma, lambda);
    for (int t = 0; t < n; ++t) CHECK(std::abs(g.advantages[t] - want[t]) < 1e-10);

    // lambda = gamma = 1 with a zero bootstrap: reward-to-go minus value, exactly.
    v[n] = 0.0;
    auto mc = compute_gae(r, v, 1.0, 1.0);
    for (int t = 0; t < n; ++t) {
      double togo = 0;
      for (int s = t; s < n; ++s) togo += r[s];
      CHECK(std::abs(mc.advantages[t] - (togo - v[t])) < 1e-12);
    }
  }
}

TEST_CASE("trainer config validation") {
  TrainerConfig c;
  c.clip = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.gae_lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.mc_samples = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("clipped surrogate identities") {
  ParamSet none;
  Tape t({&none});
  for (double lp : {-0.15, -0.05, 0.0, 0.1, 0.17})
    for (double adv : {-2.0, 0.5, 3.0}) {
      auto x = t.scalar(lp);
      auto s = clipped_surrogate(t, x, 0.0, adv, 0.2);
      CHECK(t.scalar_value(s) == std::exp(lp) * adv);
    }
  auto big = clipped_surrogate(t, t.scalar(1.0), 0.0, 2.0, 0.2);
  CHECK(t.scalar_value(big) == doctest::Approx(1.2 * 2.0));
  auto small = clipped_surrogate(t, t.scalar(-1.0), 0.0, 2.0, 0.2);
  CHECK(t.scalar_value(small) == doctest::Approx(std::exp(-1.0) * 2.0));
}

TEST_CASE("new equals old: ratios are one and the policy loss vanishes") {
  for (auto variant : {Variant::Poca, Variant::Ppo}) {
    auto setup = tiny_setup();
    setup.trainer.variant = variant;
    auto params = init_team(setup, 3);
    auto bufs = rollouts(tiny_task(), params, setup, 9);
    auto g = variant == Variant::Poca ? poca_loss(bufs, params, setup.trainer, 2)
                                      : ppo_loss(bufs, params, setup.trainer, 2);
    CHECK(std::abs(g.parts.policy_loss) < 1e-9);
    CHECK(g.parts.clip_fraction == 0.0);
    CHECK(std::abs(g.parts.mean_advantage) < 1e-9);

    TrainerConfig no_ent = setup.trainer;
    no_ent.entropy_coef = 0.0;
    auto h = variant == Variant::Poca ? poca_loss(bufs, params, no_ent, 2)
                                      : ppo_loss(bufs, params, no_ent, 2);
    double diff = h.tape.scalar_value(h.total) - g.tape.scalar_value(g.total);
    CHECK(diff == doctest::Approx(setup.trainer.entropy_coef * g.parts.entropy).epsilon(1e-10));
  }
  std::vector<RolloutBuffer> none;
  auto setup = tiny_setup();
  CHECK_THROWS_AS(poca_loss(none, init_team(setup, 1), setup.trainer, 0), InvalidArgument);
}

TEST_CASE("composed loss gradients match finite differences") {
  Rng rng(23);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto setup = tiny_setup(trial % 2 ? Roster{1, 1} : Roster{2, 1});
    setup.episode.horizon = 3;
    setup.trajectories = 1;
    auto task = tiny_task(setup.roster, std::uint64_t(trial));
    auto old = init_team(setup, std::uint64_t(trial));
    auto bufs = rollouts(task, old, setup, std::uint64_t(trial));
    auto current = perturbed(old, rng, 0.1);
    for (auto variant : {Variant::Poca, Variant::Ppo}) {
      TrainerConfig cfg = setup.trainer;
      cfg.variant = variant;
      auto batch = prepare_batch(bufs, old, cfg, 5);
      for (auto part : {Part::Total, Part::Policy, Part::Value, Part::Entropy}) {
        CHECK(fd_error(batch, current, cfg, part, rng) < 1e-4);
        ++checked;
      }
    }
  }
  CHECK(checked == 160);
}

TEST_CASE("action-blind critic makes POCA and PPO coincide for one agent") {
  auto setup = tiny_setup({1, 0});
  auto params = init_team(setup, 4);
  auto& w = params[RobotKind::Wheeled];
  const auto& first = w.layout().critic.front().weight;
  for (std::size_t r = 0; r < first.rows; ++r)
    for (std::size_t c = setup.arch.feature; c < first.cols; ++c) w.view(first)[r * first.cols + c] = 0.0;
  auto bufs = rollouts(tiny_task({1, 0}), params, setup, 3);
  TrainerConfig poca = setup.trainer, ppo = setup.trainer;
  ppo.variant = Variant::Ppo;
  auto a = prepare_batch(bufs, params, poca, 1);
  auto b = prepare_batch(bufs, params, ppo, 1);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t s = 0; s < a.samples.size(); ++s) {
    CHECK(std::abs(a.advantages[s][0] - b.advantages[s][0]) < 1e-12);
    CHECK(std::abs(a.returns[s][0] - b.returns[s][0]) < 1e-12);
  }
  auto current = params;
  Rng rng(2);
  for (double& v : current[RobotKind::Wheeled].view(current[RobotKind::Wheeled].layout().actor.weight))
    v += 0.05 * standard_normal(rng);
  std::vector<int> ids(a.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto la = build_loss(a, ids, current, poca);
  auto lb = build_loss(b, ids, current, poca);
  CHECK(la.parts.policy_loss == doctest::Approx(lb.parts.policy_loss).epsilon(1e-10));
}

TEST_CASE("hand-computed two-step single-agent PPO loss") {
  NetConfig c;
  c.obs_dim = 4;
  c.hidden = 3;
  c.feature = 2;
  c.action_dim = 3;
  c.critic_input = 2 + 3;
  c.critic_hidden = {3};
  Rng rng(77);
  ParamSet p(c);
  for (double& v : p.values()) v = 0.4 * standard_normal(rng);
  TeamParams team;
  team[RobotKind::Wheeled] = p;

  RolloutBuffer b;
  b.roster = {1, 0};
  b.agents.resize(1);
  const std::vector<std::vector<float>> obs{{0.5f, 0.0f, 1.0f, -0.25f}, {0.0f, 0.75f, 0.0f, 1.0f}};
  const std::vector<std::vector<double>> raw{{0.3, -0.2, 0.9}, {-1.4, 0.1, 0.0}};
  const double shift[2] = {-0.1, 0.5};
  std::vector<double> logp_new(2), value(3, 0.0), ent(2);
  for (int t = 0; t < 2; ++t) {
    AgentStep a;
    a.obs.values = obs[t];
    a.raw = raw[t];
    for (double r : raw[t]) a.clamped.push_back(std::clamp(r, -1.0, 1.0));
    std::vector<double> od(obs[t].begin(), obs[t].end());
    auto f = encoder_forward(p, od);
    auto d = actor_forward(p, f);
    logp_new[t] = log_prob(d, raw[t]);
    ent[t] = entropy(d);
    a.log_prob = logp_new[t] + shift[t];
    std::vector<double> in{f[0], f[1], 0.0, 0.0, 0.0};
    value[t] = critic_forward(p, in);
    b.agents[0].push_back(a);
  }
  b.rewards = {2, -1};
  b.newly_scanned = {2, 0};
  b.collisions = {{}, {{0, CollisionEvent::kObject}}};

  TrainerConfig cfg;
  cfg.variant = Variant::Ppo;
  const double g = cfg.gamma, l = cfg.gae_lambda;
  const double d1 = -1 - value[1];
  const double d0 = 2 + g * value[1] - value[0];
  const double A[2] = {d0 + g * l * d1, d1};
  const double ret[2] = {A[0] + value[0], A[1] + value[1]};
  const double mean = (A[0] + A[1]) / 2, sd = std::abs(A[0] - A[1]) / 2;
  double surr = 0, vloss = 0;
  for (int t = 0; t < 2; ++t) {
    const double an = (A[t] - mean) / (sd + 1e-8);
    const double ratio = std::exp(-shift[t]);
    const double clipped = std::clamp(ratio, 1 - cfg.clip, 1 + cfg.clip);
    surr += std::min(ratio * an, clipped * an);
    vloss += (value[t] - ret[t]) * (value[t] - ret[t]);
  }
  const double want = -surr / 2 - cfg.entropy_coef * (ent[0] + ent[1]) / 2 + cfg.value_coef * vloss / 2;

  std::vector<RolloutBuffer> bufs{b};
  auto batch = prepare_batch(bufs, team, cfg, 0);
  std::vector<int> ids{0, 1};
  auto loss = build_loss(batch, ids, team, cfg);
  CHECK(std::abs(loss.tape.scalar_value(loss.total) - want) < 1e-8);
  CHECK(loss.parts.clip_fraction == 0.5);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  auto setup = tiny_setup();
  setup.trainer.learning_rate = 0.0;
  auto params = init_team(setup, 8);
  auto res = train_inner(tiny_task(), params, setup, 2, 4);
  CHECK(res.params == params);
  CHECK(res.curve.size() == 2);
  CHECK(res.last.updates > 0);
  CHECK(std::isfinite(res.last.policy_loss));
  CHECK(res.env_steps == 2 * 2 * 6);
}

TEST_CASE("train_inner is deterministic and moves parameters") {
  auto setup = tiny_setup();
  auto params = init_team(setup, 8);
  auto a = train_inner(tiny_task(), params, setup, 2, 4);
  auto b = train_inner(tiny_task(), params, setup, 2, 4);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == params);
  auto c = train_inner(tiny_task(), params, setup, 2, 5);
  CHECK_FALSE(a.params == c.params);
  for (std::size_t r = 0; r < a.curve.size(); ++r) CHECK(a.curve[r].mean_reward == b.curve[r].mean_reward);
  auto offset = train_inner(tiny_task(), params, setup, 1, 4, 100);
  CHECK(offset.curve[0].env_steps == 100 + 2 * 6);
}

TEST_CASE("absent kinds keep empty parameter families") {
  auto setup = tiny_setup({2, 0});
  auto params = init_team(setup, 1);
  CHECK(params[RobotKind::Quadcopter].empty());
  auto res = train_inner(tiny_task({2, 0}), params, setup, 1, 1);
  CHECK(res.params[RobotKind::Quadcopter].empty());
  CHECK_FALSE(res.params[RobotKind::Wheeled] == params[RobotKind::Wheeled]);
}

TEST_CASE("chunked batch gradient equals the whole-batch loss gradient") {
  auto setup = tiny_setup();
  auto old = init_team(setup, 2);
  auto bufs = rollouts(tiny_task(), old, setup, 6);
  Rng rng(1);
  auto current = perturbed(old, rng, 0.05);
  auto batch = prepare_batch(bufs, old, setup.trainer, 3);
  std::vector<int> ids(batch.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto whole = build_loss(batch, ids, current, setup.trainer);
  auto want = loss_gradient(whole);
  for (int chunk : {1, 5, 1000}) {
    auto got = batch_gradient(batch, current, setup.trainer, chunk);
    CHECK(got.loss == doctest::Approx(whole.tape.scalar_value(whole.total)).epsilon(1e-12));
    for (int k = 0; k < kKindCount; ++k) CHECK(oracle::relative_error(got.grad[k], want[k]) < 1e-12);
  }
}

TEST_CASE("budgeted training respects the step budget") {
  auto setup = tiny_setup();
  auto params = init_team(setup, 3);
  const long long cost = round_cost(setup);
  CHECK(cost == 12);
  auto none = train_budget(tiny_task(), params, setup, cost - 1, 1);
  CHECK(none.curve.empty());
  CHECK(none.params == params);
  auto three = train_budget(tiny_task(), params, setup, 3 * cost + 5, 1);
  CHECK(three.curve.size() == 3);
  CHECK(three.env_steps <= 3 * cost + 5);
  auto same = train_inner(tiny_task(), params, setup, 3, 1);
  CHECK(same.params == three.params);
  auto stopped = train_budget(tiny_task(), params, setup, 10 * cost, 1, 0,
                              [](const std::vector<RoundRecord>& c) { return c.size() >= 2; });
  CHECK(stopped.curve.size() == 2);
}
