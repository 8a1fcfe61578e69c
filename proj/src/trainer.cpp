#include "mrss/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrss/error.hpp"

namespace mrss {

void TrainerConfig::validate() const {
  if (!(clip > 0 && clip < 1)) throw InvalidArgument("clip must lie in (0,1)");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw InvalidArgument("gae_lambda must lie in [0,1]");
  if (!(gamma > 0 && gamma <= 1)) throw InvalidArgument("gamma must lie in (0,1]");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (minibatch < 1) throw InvalidArgument("minibatch must be >= 1");
  if (learning_rate < 0) throw InvalidArgument("learning_rate must be >= 0");
  if (mc_samples < 1) throw InvalidArgument("mc_samples must be >= 1");
  if (entropy_coef < 0 || value_coef < 0 || max_grad_norm < 0)
    throw InvalidArgument("loss coefficients must be >= 0");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1)
    throw InvalidArgument("compute_gae needs one value per reward plus a bootstrap value");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double delta = rewards[i] + gamma * values[i + 1] - values[i];
    acc = delta + gamma * lambda * acc;
    r.advantages[i] = acc;
    r.returns[i] = acc + values[i];
  }
  return r;
}

NetConfig net_config(const TrainSetup& setup, RobotKind kind) {
  NetConfig c;
  const int n = setup.roster.size();
  c.obs_dim = observation_size(kind, setup.episode.scheme, n);
  c.hidden = setup.arch.hidden;
  c.feature = setup.arch.feature;
  c.action_dim = action_dims(kind);
  c.critic_input = std::size_t(n) * setup.arch.feature + joint_action_dims(setup.roster);
  c.critic_hidden = setup.arch.critic_hidden;
  c.init_log_std = setup.arch.init_log_std;
  return c;
}

TeamParams init_team(const TrainSetup& setup, std::uint64_t seed) {
  TeamParams tp;
  for (int k = 0; k < kKindCount; ++k) {
    if (setup.roster.count(RobotKind(k)) == 0) continue;
    Rng rng(derive_seed(seed, {kStreamInit, std::uint64_t(k)}));
    tp.by_kind[k] = init_params(net_config(setup, RobotKind(k)), rng);
  }
  return tp;
}

namespace {

struct AgentLayout {
  std::vector<AgentSlice> slices;
  std::size_t joint = 0;
};

AgentLayout agent_layout(const Roster& roster) {
  AgentLayout l;
  for (int i = 0; i < roster.size(); ++i) {
    std::size_t d = action_dims(roster.kind_of(i));
    l.slices.push_back({l.joint, d});
    l.joint += d;
  }
  return l;
}

std::vector<double> joint_actions(const RolloutBuffer& b, int t) {
  std::vector<double> j;
  for (const auto& agent : b.agents) j.insert(j.end(), agent[t].clamped.begin(), agent[t].clamped.end());
  return j;
}

}  // namespace

PreparedBatch prepare_batch(std::span<const RolloutBuffer> episodes, const TeamParams& old,
                            const TrainerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PreparedBatch batch;
  batch.variant = cfg.variant;
  if (episodes.empty()) throw InvalidArgument("cannot prepare an empty batch");
  batch.roster = episodes.front().roster;
  const Roster& roster = batch.roster;
  const int n = roster.size();
  const AgentLayout layout = agent_layout(roster);
  Rng rng(derive_seed(seed, {kStreamBaseline}));

  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const RolloutBuffer& b = episodes[e];
    if (!(b.roster == roster)) throw InvalidArgument("episodes in a batch must share a roster");
    const int T = b.steps();
    if (T == 0) continue;
    batch.episodes.push_back(&b);
    const int ei = int(batch.episodes.size()) - 1;

    std::vector<double> rewards(b.rewards.begin(), b.rewards.end());
    std::vector<std::vector<std::vector<double>>> feats(T, std::vector<std::vector<double>>(n));
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i)
        feats[t][i] = encoder_forward(old[roster.kind_of(i)],
                                      std::span<const float>(b.agents[i][t].obs.values));

    std::array<GaeResult, kKindCount> gae;
    std::array<std::vector<double>, kKindCount> q_taken;
    for (int k = 0; k < kKindCount; ++k) {
      if (roster.count(RobotKind(k)) == 0) continue;
      std::vector<double> values(T + 1, 0.0);
      for (int t = 0; t < T; ++t) {
        std::vector<double> joint = joint_actions(b, t);
        if (cfg.variant == Variant::Ppo) std::fill(joint.begin(), joint.end(), 0.0);
        values[t] = critic_forward(old.by_kind[k], critic_input(feats[t], joint));
      }
      q_taken[k].assign(values.begin(), values.end() - 1);
      gae[k] = compute_gae(rewards, values, cfg.gamma, cfg.gae_lambda);
    }

    for (int t = 0; t < T; ++t) {
      batch.samples.push_back({ei, t});
      std::array<double, kKindCount> ret{};
      for (int k = 0; k < kKindCount; ++k)
        if (roster.count(RobotKind(k)) > 0) ret[k] = gae[k].returns[t];
      batch.returns.push_back(ret);

      std::vector<double> adv(n);
      const std::vector<double> joint = joint_actions(b, t);
      for (int i = 0; i < n; ++i) {
        const int k = int(roster.kind_of(i));
        if (cfg.variant == Variant::Ppo) {
          adv[i] = gae[k].advantages[t];
          continue;
        }
        const ParamSet& pk = old.by_kind[k];
        const ParamSet& pi = old[roster.kind_of(i)];
        const auto& f = feats[t];
        JointQ q = [&](std::span<const double> u) { return critic_forward(pk, critic_input(f, u)); };
        const ActionDistribution dist = actor_forward(pi, f[i]);
        ActionSampler sampler = [&](Rng& r, std::span<double> out) {
          auto a = sample_action(dist, r);
          for (std::size_t d = 0; d < out.size(); ++d) out[d] = std::clamp(a[d], -1.0, 1.0);
        };
        const double cf =
            counterfactual_advantage(q, joint, layout.slices[i], sampler, cfg.mc_samples, rng);
        // lambda-return minus the counterfactual baseline
        adv[i] = gae[k].returns[t] - q_taken[k][t] + cf;
      }
      batch.advantages.push_back(std::move(adv));
    }
  }
  if (batch.samples.empty()) throw InvalidArgument("cannot prepare an empty batch");
  return batch;
}

Tape::Var clipped_surrogate(Tape& t, Tape::Var logp_new, double logp_old, double advantage,
                            double clip) {
  auto ratio = t.exp(t.shift(logp_new, -logp_old));
  auto unclipped = t.scale(ratio, advantage);
  auto clipped = t.scale(t.clamp(ratio, 1.0 - clip, 1.0 + clip), advantage);
  return t.minimum(unclipped, clipped);
}

namespace {

// Normalization and averaging constants of a loss; taken from the whole
// selection even when the graph only covers a chunk of it.
struct LossScale {
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double agent_samples = 0.0;
  double value_terms = 0.0;
};

LossScale selection_scale(const PreparedBatch& batch, std::span<const int> sample_ids) {
  LossScale sc;
  double sq = 0.0;
  std::size_t count = 0;
  for (int s : sample_ids)
    for (double a : batch.advantages.at(s)) {
      sc.adv_mean += a;
      ++count;
    }
  sc.adv_mean /= double(count);
  for (int s : sample_ids)
    for (double a : batch.advantages[s]) sq += (a - sc.adv_mean) * (a - sc.adv_mean);
  sc.adv_std = std::sqrt(sq / double(count));
  int kinds = 0;
  for (int k = 0; k < kKindCount; ++k) kinds += batch.roster.count(RobotKind(k)) > 0;
  sc.agent_samples = double(count);
  sc.value_terms = double(sample_ids.size()) * kinds;
  return sc;
}

LossGraph scaled_loss(const PreparedBatch& batch, std::span<const int> sample_ids,
                      const TeamParams& current, const TrainerConfig& cfg, const LossScale& sc) {
  if (sample_ids.empty()) throw InvalidArgument("loss over an empty minibatch");
  const Roster& roster = batch.roster;
  const int n = roster.size();
  LossGraph g{Tape({&current.by_kind[0], &current.by_kind[1]}), {}, {}, {}, {}, {}};
  Tape& t = g.tape;
  const double mean = sc.adv_mean, stdev = sc.adv_std;

  std::vector<Tape::Var> surrogates, entropies, value_terms;
  std::array<Tape::Var, kKindCount> log_std{};
  for (int k = 0; k < kKindCount; ++k)
    if (roster.count(RobotKind(k)) > 0) log_std[k] = actor_log_std(t, k, current.by_kind[k]);

  int clipped = 0;
  double adv_sum = 0.0;
  for (int s : sample_ids) {
    const Sample& smp = batch.samples[s];
    const RolloutBuffer& b = *batch.episodes[smp.episode];
    std::vector<Tape::Var> feats;
    std::vector<double> joint;
    for (int i = 0; i < n; ++i) {
      const AgentStep& a = b.agents[i][smp.step];
      const int k = int(roster.kind_of(i));
      feats.push_back(encoder_forward(t, k, current.by_kind[k], t.constant(a.obs.values)));
      joint.insert(joint.end(), a.clamped.begin(), a.clamped.end());
    }
    if (batch.variant == Variant::Ppo) std::fill(joint.begin(), joint.end(), 0.0);
    std::vector<Tape::Var> parts = feats;
    parts.push_back(t.constant(std::move(joint)));
    const Tape::Var input = t.concat(parts);
    for (int k = 0; k < kKindCount; ++k) {
      if (roster.count(RobotKind(k)) == 0) continue;
      auto q = critic_forward(t, k, current.by_kind[k], input);
      value_terms.push_back(t.square(t.shift(q, -batch.returns[s][k])));
    }
    for (int i = 0; i < n; ++i) {
      const AgentStep& a = b.agents[i][smp.step];
      const int k = int(roster.kind_of(i));
      const double adv = (batch.advantages[s][i] - mean) / (stdev + 1e-8);
      adv_sum += adv;
      auto mu = actor_mean(t, k, current.by_kind[k], feats[i]);
      auto lp = gaussian_log_prob(t, mu, log_std[k], t.constant(a.raw));
      auto surr = clipped_surrogate(t, lp, a.log_prob, adv, cfg.clip);
      const double ratio = std::exp(t.scalar_value(lp) - a.log_prob);
      if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
      surrogates.push_back(surr);
      entropies.push_back(gaussian_entropy(t, log_std[k]));
    }
  }
  const double n_agent_samples = sc.agent_samples;
  auto policy = t.scale(t.add_n(surrogates), -1.0 / n_agent_samples);
  auto ent = t.scale(t.add_n(entropies), 1.0 / n_agent_samples);
  auto value = t.scale(t.add_n(value_terms), 1.0 / sc.value_terms);
  g.total = t.add(t.add(policy, t.scale(ent, -cfg.entropy_coef)), t.scale(value, cfg.value_coef));
  g.policy = policy;
  g.value = value;
  g.entropy = ent;
  g.parts.policy_loss = t.scalar_value(policy);
  g.parts.value_loss = t.scalar_value(value);
  g.parts.entropy = t.scalar_value(ent);
  g.parts.clip_fraction = clipped / n_agent_samples;
  g.parts.mean_advantage = adv_sum / n_agent_samples;
  if (!std::isfinite(t.scalar_value(g.total))) throw NumericError("non-finite loss");
  return g;
}

}  // namespace

LossGraph build_loss(const PreparedBatch& batch, std::span<const int> sample_ids,
                     const TeamParams& current, const TrainerConfig& cfg) {
  if (sample_ids.empty()) throw InvalidArgument("loss over an empty minibatch");
  return scaled_loss(batch, sample_ids, current, cfg, selection_scale(batch, sample_ids));
}

BatchGradient batch_gradient(const PreparedBatch& batch, const TeamParams& current,
                             const TrainerConfig& cfg, int chunk) {
  if (chunk < 1) throw InvalidArgument("chunk size must be >= 1");
  const int n = int(batch.samples.size());
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  const LossScale sc = selection_scale(batch, ids);
  BatchGradient out;
  for (int k = 0; k < kKindCount; ++k) out.grad[k].assign(current.by_kind[k].size(), 0.0);
  for (int start = 0; start < n; start += chunk) {
    std::span<const int> part(ids.data() + start, std::size_t(std::min(chunk, n - start)));
    LossGraph g = scaled_loss(batch, part, current, cfg, sc);
    auto grads = loss_gradient(g);
    for (int k = 0; k < kKindCount; ++k)
      for (std::size_t i = 0; i < grads[k].size(); ++i) out.grad[k][i] += grads[k][i];
    out.loss += g.tape.scalar_value(g.total);
    out.parts.policy_loss += g.parts.policy_loss;
    out.parts.value_loss += g.parts.value_loss;
    out.parts.entropy += g.parts.entropy;
    out.parts.clip_fraction += g.parts.clip_fraction;
    out.parts.mean_advantage += g.parts.mean_advantage;
  }
  return out;
}

namespace {
LossGraph whole_buffer_loss(std::span<const RolloutBuffer> episodes, const TeamParams& params,
                            TrainerConfig cfg, Variant v, std::uint64_t seed) {
  cfg.variant = v;
  PreparedBatch batch = prepare_batch(episodes, params, cfg, seed);
  std::vector<int> ids(batch.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  return build_loss(batch, ids, params, cfg);
}
}  // namespace

LossGraph poca_loss(std::span<const RolloutBuffer> episodes, const TeamParams& params,
                    const TrainerConfig& cfg, std::uint64_t seed) {
  return whole_buffer_loss(episodes, params, cfg, Variant::Poca, seed);
}

LossGraph ppo_loss(std::span<const RolloutBuffer> episodes, const TeamParams& params,
                   const TrainerConfig& cfg, std::uint64_t seed) {
  return whole_buffer_loss(episodes, params, cfg, Variant::Ppo, seed);
}

std::array<GradientVector, kKindCount> loss_gradient(LossGraph& g) {
  auto grads = g.tape.backward(g.total);
  return {std::move(grads[0]), std::move(grads[1])};
}

std::vector<EpisodeResult> collect(const TaskSpec& task, const TeamParams& params,
                                   const TrainSetup& setup, std::uint64_t seed) {
  const Scene fresh(task);
  std::vector<EpisodeResult> out;
  for (int k = 0; k < setup.trajectories; ++k)
    out.push_back(run_episode(fresh, params, setup.episode, derive_seed(seed, {std::uint64_t(k)})));
  return out;
}

TrainStats optimize(std::span<const RolloutBuffer> episodes, TeamParams& params,
                    OptimizerState& opt, const TrainerConfig& cfg, std::uint64_t seed) {
  PreparedBatch batch = prepare_batch(episodes, params, cfg, seed);
  const int n = int(batch.samples.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  TrainStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, {kStreamShuffle, std::uint64_t(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int end = std::min(n, start + cfg.minibatch);
      std::span<const int> ids(order.data() + start, std::size_t(end - start));
      LossGraph g = build_loss(batch, ids, params, cfg);
      auto grads = loss_gradient(g);
      double sq = 0.0;
      for (const auto& gk : grads)
        for (double v : gk) sq += v * v;
      const double gnorm = std::sqrt(sq);
      const double scale =
          (cfg.max_grad_norm > 0 && gnorm > cfg.max_grad_norm) ? cfg.max_grad_norm / gnorm : 1.0;
      for (int k = 0; k < kKindCount; ++k) {
        if (params.by_kind[k].empty()) continue;
        if (scale != 1.0)
          for (double& v : grads[k]) v *= scale;
        adam_step(params.by_kind[k].values(), grads[k], opt.adam[k], adam);
      }
      stats.policy_loss += g.parts.policy_loss;
      stats.value_loss += g.parts.value_loss;
      stats.entropy += g.parts.entropy;
      stats.clip_fraction += g.parts.clip_fraction;
      stats.mean_advantage += g.parts.mean_advantage;
      stats.grad_norm += gnorm;
      ++stats.updates;
    }
  }
  if (stats.updates > 0) {
    const double u = stats.updates;
    stats.policy_loss /= u;
    stats.value_loss /= u;
    stats.entropy /= u;
    stats.clip_fraction /= u;
    stats.mean_advantage /= u;
    stats.grad_norm /= u;
  }
  for (const auto& p : params.by_kind)
    if (!p.all_finite()) throw NumericError("parameters became non-finite");
  return stats;
}

namespace {

using RoundGate = std::function<bool(int round, const InnerResult& so_far)>;

InnerResult run_rounds(const TaskSampler& tasks, TeamParams params, const TrainSetup& setup,
                       std::uint64_t seed, long long step_offset, const RoundGate& next) {
  setup.episode.validate();
  setup.trainer.validate();
  if (setup.trajectories < 1) throw InvalidArgument("need at least one trajectory per round");
  InnerResult res;
  res.env_steps = step_offset;
  OptimizerState opt;
  for (int r = 0; next(r, res); ++r) {
    const TaskSpec task = tasks(r);
    auto eps = collect(task, params, setup, derive_seed(seed, {kStreamRounds, std::uint64_t(r)}));
    RoundRecord rec;
    std::vector<RolloutBuffer> buffers;
    std::vector<EpisodeMetrics> metrics;
    for (auto& e : eps) {
      res.env_steps += e.metrics.steps;
      rec.mean_reward += e.metrics.total_reward;
      for (int k = 0; k < kKindCount; ++k) rec.kind_reward[k] += e.metrics.kind_reward(RobotKind(k));
      metrics.push_back(e.metrics);
      buffers.push_back(std::move(e.buffer));
    }
    rec.mean_reward /= double(eps.size());
    for (auto& kr : rec.kind_reward) kr /= double(eps.size());
    rec.success_rate = success_rate(metrics);
    rec.env_steps = res.env_steps;
    rec.stats = optimize(buffers, params, opt, setup.trainer,
                         derive_seed(seed, {kStreamShuffle, std::uint64_t(r)}));
    res.last = rec.stats;
    res.curve.push_back(rec);
  }
  res.params = std::move(params);
  return res;
}

}  // namespace

InnerResult train_inner(const TaskSampler& tasks, TeamParams params, const TrainSetup& setup,
                        int rounds, std::uint64_t seed, long long step_offset) {
  return run_rounds(tasks, std::move(params), setup, seed, step_offset,
                    [rounds](int r, const InnerResult&) { return r < rounds; });
}

long long round_cost(const TrainSetup& setup) {
  return (long long)setup.trajectories * setup.episode.horizon;
}

InnerResult train_budget(const TaskSampler& tasks, TeamParams params, const TrainSetup& setup,
                         long long budget, std::uint64_t seed, long long step_offset,
                         const StopRule& stop) {
  const long long cost = round_cost(setup);
  return run_rounds(tasks, std::move(params), setup, seed, step_offset,
                    [&](int, const InnerResult& so_far) {
                      if (stop && !so_far.curve.empty() && stop(so_far.curve)) return false;
                      return so_far.env_steps - step_offset + cost <= budget;
                    });
}

InnerResult train_budget(const TaskSpec& task, TeamParams params, const TrainSetup& setup,
                         long long budget, std::uint64_t seed, long long step_offset,
                         const StopRule& stop) {
  return train_budget([&task](int) { return task; }, std::move(params), setup, budget, seed,
                      step_offset, stop);
}

InnerResult train_inner(const TaskSpec& task, TeamParams params, const TrainSetup& setup,
                        int rounds, std::uint64_t seed, long long step_offset) {
  return train_inner([&task](int) { return task; }, std::move(params), setup, rounds, seed,
                     step_offset);
}

}  // namespace mrss
