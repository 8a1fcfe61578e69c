#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "mrss/error.hpp"
#include "mrss/policy.hpp"
#include "oracles.hpp"

using namespace mrss;

namespace {

NetConfig small_net() {
  NetConfig c;
  c.obs_dim = 7;
  c.hidden = 5;
  c.feature = 4;
  c.action_dim = 3;
  c.critic_input = 2 * 4 + 6;
  c.critic_hidden = {6, 5};
  return c;
}

ParamSet normal_params(const NetConfig& c, Rng& rng, double sd = 0.1) {
  ParamSet p(c);
  for (double& v : p.values()) v = sd * standard_normal(rng);
  return p;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double sd = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = sd * standard_normal(rng);
  return v;
}

// Checks the tape gradient of `loss` against central differences on a
// random subset of coordinates.
void check_fd(const ParamSet& p, const std::function<Tape::Var(Tape&, const ParamSet&)>& loss,
              Rng& rng, std::size_t coords = 40) {
  Tape t({&p});
  auto l = loss(t, p);
  auto g = t.backward(l)[0];
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < coords; ++i) idx.push_back(std::size_t(uniform_int(rng, 0, int(p.size()) - 1)));
  for (const auto& s : p.layout().sections) idx.push_back(s.offset);  // one from every section
  auto f = [&](const std::vector<double>& x) {
    ParamSet q = p;
    q.unflatten(x);
    Tape tq({&q});
    return tq.scalar_value(loss(tq, q));
  };
  auto fd = oracle::central_diff(f, p.flatten(), idx, 1e-5);
  std::vector<double> an;
  for (auto i : idx) an.push_back(g[i]);
  CHECK(oracle::relative_error(an, fd) < 1e-4);
}

}  // namespace

TEST_CASE("encoder examples") {
  auto c = small_net();
  ParamSet zero(c);
  std::vector<double> obs{1, 2, 3, 4, 5, 6, 7};
  for (double v : encoder_forward(zero, obs)) CHECK(v == 0.0);

  NetConfig one;
  one.obs_dim = 1;
  one.hidden = 1;
  one.feature = 1;
  one.action_dim = 1;
  one.critic_input = 1;
  ParamSet id(one);
  for (const auto& l : id.layout().encoder) id.view(l.weight)[0] = 1.0;
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    std::vector<double> in{x};
    CHECK(encoder_forward(id, in)[0] == doctest::Approx(std::tanh(std::tanh(std::tanh(x)))).epsilon(1e-15));
  }

  Rng rng(1);
  auto p = normal_params(c, rng);
  CHECK(encoder_forward(p, obs) == encoder_forward(p, obs));
  std::vector<float> obs_f(obs.begin(), obs.end());
  auto a = encoder_forward(p, obs), b = encoder_forward(p, obs_f);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  std::vector<double> wrong(6, 0.0);
  CHECK_THROWS_AS(encoder_forward(p, wrong), InvalidArgument);
}

TEST_CASE("gaussian closed forms") {
  ActionDistribution d{{0, 0, 0}, {1, 1, 1}};
  std::vector<double> zero{0, 0, 0};
  CHECK(log_prob(d, zero) == doctest::Approx(-1.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  ActionDistribution shifted{{5, -3, 2}, {0.5, 2, 1}};
  ActionDistribution centred{{0, 0, 0}, {0.5, 2, 1}};
  CHECK(entropy(shifted) == entropy(centred));
  double h = 0;
  for (double s : {0.5, 2.0, 1.0}) h += 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * s * s);
  CHECK(entropy(shifted) == doctest::Approx(h).epsilon(1e-14));

  auto c = small_net();
  Rng rng(2);
  ParamSet p = normal_params(c, rng);
  for (double& v : p.view(p.layout().log_std)) v = -1e4;
  auto feats = random_vec(rng, c.feature);
  auto dist = actor_forward(p, feats, -std::numeric_limits<double>::infinity());
  for (double s : dist.std) CHECK(s == 0.0);
  CHECK(sample_action(dist, rng) == dist.mean);
  auto floored = actor_forward(p, feats);
  for (double s : floored.std) CHECK(s == doctest::Approx(std::exp(kLogStdFloor)));
}

TEST_CASE("critic examples") {
  auto c = small_net();
  ParamSet zero(c);
  std::vector<double> in(c.critic_input, 0.7);
  CHECK(critic_forward(zero, in) == 0.0);

  NetConfig lin = c;
  lin.critic_hidden = {};
  Rng rng(4);
  ParamSet p = normal_params(lin, rng);
  auto x = random_vec(rng, lin.critic_input);
  const auto& out = p.layout().critic.back();
  double want = p.view(out.bias)[0];
  for (std::size_t i = 0; i < x.size(); ++i) want += p.view(out.weight)[i] * x[i];
  CHECK(critic_forward(p, x) == doctest::Approx(want).epsilon(1e-14));
  std::vector<double> short_in(lin.critic_input - 1, 0.0);
  CHECK_THROWS_AS(critic_forward(p, short_in), InvalidArgument);
}

TEST_CASE("counterfactual advantage examples") {
  JointQ constant = [](std::span<const double>) { return 4.2; };
  std::vector<double> joint{0.3, -0.1};
  Rng rng(8);
  ActionSampler sampler = [](Rng& r, std::span<double> out) {
    for (double& v : out) v = standard_normal(r);
  };
  for (int m : {1, 7, 64}) CHECK(counterfactual_advantage(constant, joint, {1, 1}, sampler, m, rng) == 0.0);
  CHECK_THROWS_AS(counterfactual_advantage(constant, joint, {1, 1}, sampler, 0, rng), InvalidArgument);

  DiscretePolicy uniform2{{{0.0}, {1.0}}, {0.5, 0.5}};
  JointQ toy = [](std::span<const double> u) { return u[0] == 0.0 ? 1.0 : 3.0; };
  std::vector<double> took{1.0};
  CHECK(counterfactual_advantage_exact(toy, took, {0, 1}, uniform2) == doctest::Approx(1.0));
}

TEST_CASE("exact counterfactual identities on discrete toys") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int agents = uniform_int(rng, 1, 3);
    const int n_actions = uniform_int(rng, 2, 5);
    // Random tabular Q over the joint action index.
    int table_size = 1;
    for (int a = 0; a < agents; ++a) table_size *= n_actions;
    auto table = random_vec(rng, std::size_t(table_size));
    JointQ q = [&](std::span<const double> u) {
      int idx = 0;
      for (double v : u) idx = idx * n_actions + int(v);
      return table[idx];
    };
    const double shift = uniform(rng, -10, 10);
    JointQ q_shift = [&](std::span<const double> u) { return q(u) + shift; };

    std::vector<double> joint(agents);
    for (auto& v : joint) v = uniform_int(rng, 0, n_actions - 1);
    const int agent = uniform_int(rng, 0, agents - 1);
    DiscretePolicy pi;
    double z = 0;
    for (int k = 0; k < n_actions; ++k) {
      pi.actions.push_back({double(k)});
      pi.probs.push_back(uniform(rng, 0.05, 1.0));
      z += pi.probs.back();
    }
    for (double& p : pi.probs) p /= z;

    double expectation = 0.0;
    for (int k = 0; k < n_actions; ++k) {
      auto u = joint;
      u[agent] = k;
      expectation += pi.probs[k] * counterfactual_advantage_exact(q, u, {std::size_t(agent), 1}, pi);
    }
    CHECK(std::abs(expectation) < 1e-10);
    double a = counterfactual_advantage_exact(q, joint, {std::size_t(agent), 1}, pi);
    double b = counterfactual_advantage_exact(q_shift, joint, {std::size_t(agent), 1}, pi);
    CHECK(std::abs(a - b) < 1e-10);

    // Monte-Carlo estimate with M = 1024 lands within 3 standard errors.
    if (trial >= 20) continue;
    ActionSampler sampler = [&](Rng& r, std::span<double> out) {
      double x = uniform(r, 0.0, 1.0), acc = 0.0;
      int k = 0;
      for (; k < n_actions - 1; ++k) {
        acc += pi.probs[k];
        if (x < acc) break;
      }
      out[0] = k;
    };
    const int M = 1024;
    double mc = counterfactual_advantage(q, joint, {std::size_t(agent), 1}, sampler, M, rng);
    double mean = 0, var = 0;
    for (int k = 0; k < n_actions; ++k) {
      auto u = joint;
      u[agent] = k;
      mean += pi.probs[k] * q(u);
    }
    for (int k = 0; k < n_actions; ++k) {
      auto u = joint;
      u[agent] = k;
      var += pi.probs[k] * (q(u) - mean) * (q(u) - mean);
    }
    const double se = std::sqrt(var / M);
    CHECK(std::abs(mc - a) <= 3 * se + 1e-12);
  }
}

TEST_CASE("tape gradients of simple losses") {
  auto c = small_net();
  Rng rng(5);
  ParamSet p = normal_params(c, rng, 1.0);
  Tape t({&p});
  auto w = t.parameter(0, p.layout().encoder[0].weight);
  auto g = t.backward(t.sum(t.square(w)))[0];
  auto vals = p.view(p.layout().encoder[0].weight);
  for (std::size_t i = 0; i < vals.size(); ++i)
    CHECK(g[p.layout().encoder[0].weight.offset + i] == doctest::Approx(2 * vals[i]));
  std::size_t nonzero = 0;
  for (double v : g) nonzero += v != 0.0;
  CHECK(nonzero == vals.size());

  Tape t2({&p});
  auto g2 = t2.backward(t2.scalar(3.0))[0];
  CHECK(g2.size() == p.size());
  for (double v : g2) CHECK(v == 0.0);

  Tape t3({&p});
  auto huge = t3.exp(t3.scale(t3.parameter(0, p.layout().log_std), 1e6));
  CHECK_THROWS_AS(t3.backward(t3.sum(huge)), NumericError);
}

TEST_CASE("actor log-prob and entropy gradients match finite differences") {
  auto c = small_net();
  Rng rng(31);
  for (int net = 0; net < 20; ++net) {
    ParamSet p = normal_params(c, rng);
    auto obs = random_vec(rng, c.obs_dim);
    auto act = random_vec(rng, c.action_dim, 0.5);
    check_fd(p, [&](Tape& t, const ParamSet& q) {
      auto f = encoder_forward(t, 0, q, t.constant(obs));
      auto mu = actor_mean(t, 0, q, f);
      auto ls = actor_log_std(t, 0, q);
      return t.add(gaussian_log_prob(t, mu, ls, t.constant(act)), t.scale(gaussian_entropy(t, ls), 0.3));
    }, rng);
  }
}

TEST_CASE("critic and clipped objective gradients match finite differences") {
  auto c = small_net();
  Rng rng(32);
  for (int net = 0; net < 20; ++net) {
    ParamSet p = normal_params(c, rng);
    auto o1 = random_vec(rng, c.obs_dim), o2 = random_vec(rng, c.obs_dim);
    auto u = random_vec(rng, 6, 0.5);
    const double target = standard_normal(rng);
    check_fd(p, [&](Tape& t, const ParamSet& q) {
      std::vector<Tape::Var> parts{encoder_forward(t, 0, q, t.constant(o1)),
                                   encoder_forward(t, 0, q, t.constant(o2)), t.constant(u)};
      auto v = critic_forward(t, 0, q, t.concat(parts));
      auto err = t.square(t.shift(v, -target));
      auto mu = actor_mean(t, 0, q, parts[0]);
      auto m = t.minimum(t.sum(t.tanh(mu)), t.scalar(0.1));
      return t.add(err, t.mul(m, t.clamp(t.sum(mu), -0.05, 0.05)));
    }, rng);
  }
}

TEST_CASE("sparse constant inputs take the same gradient as dense ones") {
  auto c = small_net();
  Rng rng(40);
  ParamSet p = normal_params(c, rng);
  std::vector<double> sparse(c.obs_dim, 0.0);
  sparse[2] = 0.5;
  Tape a({&p});
  auto ga = a.backward(a.sum(encoder_forward(a, 0, p, a.constant(sparse))))[0];
  std::vector<float> sf(sparse.begin(), sparse.end());
  Tape b({&p});
  auto gb = b.backward(b.sum(encoder_forward(b, 0, p, b.constant(std::span<const float>(sf)))))[0];
  CHECK(ga == gb);
  auto fd = oracle::central_diff(
      [&](const std::vector<double>& x) {
        ParamSet q = p;
        q.unflatten(x);
        double s = 0;
        for (double v : encoder_forward(q, sparse)) s += v;
        return s;
      },
      p.flatten(), {p.layout().encoder[0].weight.offset + 2, p.layout().encoder[0].weight.offset + 3}, 1e-5);
  CHECK(ga[p.layout().encoder[0].weight.offset + 2] == doctest::Approx(fd[0]).epsilon(1e-6));
  CHECK(ga[p.layout().encoder[0].weight.offset + 3] == 0.0);
}

TEST_CASE("adam step") {
  std::vector<double> x{1.0, -2.0, 0.5};
  std::vector<double> zero(3, 0.0);
  AdamState s;
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  auto before = x;
  adam_step(x, zero, s, cfg);
  CHECK(x == before);
  CHECK(s.t == 1);

  AdamState fresh;
  std::vector<double> g{0.3, -2.0, 1e-3};
  adam_step(x, g, fresh, cfg);
  for (int i = 0; i < 3; ++i)
    CHECK(x[i] == doctest::Approx(before[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-12));
  CHECK(fresh.m[0] == doctest::Approx(0.1 * 0.3));
  CHECK(fresh.v[1] == doctest::Approx(0.001 * 4.0));

  AdamState s2 = fresh;
  adam_step(x, zero, s2, cfg);
  CHECK(s2.m[0] == doctest::Approx(0.9 * fresh.m[0]));

  auto y = before, z = before;
  AdamState sy, sz;
  for (int k = 0; k < 5; ++k) {
    adam_step(y, g, sy, cfg);
    adam_step(z, g, sz, cfg);
  }
  CHECK(y == z);
  CHECK(sy == sz);
  std::vector<double> bad(2, 0.0);
  CHECK_THROWS_AS(adam_step(y, bad, sy, cfg), InvalidArgument);
}

TEST_CASE("parameter flat and text round trips are exact") {
  auto c = small_net();
  Rng rng(9);
  ParamSet p = init_params(c, rng);
  CHECK(p.all_finite());
  ParamSet q(c);
  q.unflatten(p.flatten());
  CHECK(q == p);
  std::stringstream ss;
  write_params(ss, p);
  CHECK(read_params(ss) == p);
  std::stringstream es;
  write_params(es, ParamSet{});
  CHECK(read_params(es).empty());
  for (double v : p.view(p.layout().log_std)) CHECK(v == c.init_log_std);
  for (double v : p.view(p.layout().encoder[0].bias)) CHECK(v == 0.0);
  std::vector<double> short_flat(p.size() - 1);
  CHECK_THROWS_AS(q.unflatten(short_flat), InvalidArgument);
}
