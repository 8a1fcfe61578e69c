#include "mrss/episode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "mrss/error.hpp"
#include "mrss/policy.hpp"

namespace mrss {

void EpisodeConfig::validate() const {
  if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
  if (!(dt > 0)) throw InvalidArgument("dt must be positive");
  if (!(success_threshold > 0 && success_threshold <= 1))
    throw InvalidArgument("success_threshold must lie in (0,1]");
}

int compute_rewards(int newly_scanned, std::span<const CollisionEvent> collisions) {
  if (newly_scanned < 0) throw InvalidArgument("newly scanned count must be >= 0");
  return newly_scanned - int(collisions.size());
}

std::vector<double> critic_input(const std::vector<std::vector<double>>& feats,
                                 std::span<const double> joint) {
  std::vector<double> in;
  for (const auto& f : feats) in.insert(in.end(), f.begin(), f.end());
  in.insert(in.end(), joint.begin(), joint.end());
  return in;
}

NeuralPolicy::NeuralPolicy(const TeamParams& params, Roster roster, bool deterministic)
    : params_(params), roster_(roster), deterministic_(deterministic) {
  for (int k = 0; k < kKindCount; ++k)
    if (roster_.count(RobotKind(k)) > 0 && params_.by_kind[k].empty())
      throw InvalidArgument(std::string("missing parameters for ") + kind_name(RobotKind(k)));
}

Decision NeuralPolicy::decide(int agent, const Observation& obs, Rng& rng) const {
  const ParamSet& p = params_[roster_.kind_of(agent)];
  Decision d;
  d.features = encoder_forward(p, std::span<const float>(obs.values));
  auto dist = actor_forward(p, d.features);
  d.raw = deterministic_ ? dist.mean : sample_action(dist, rng);
  d.log_prob = log_prob(dist, d.raw);
  d.entropy = entropy(dist);
  return d;
}

double NeuralPolicy::value(int agent, const std::vector<std::vector<double>>& feats,
                           std::span<const double> joint) const {
  return critic_forward(params_[roster_.kind_of(agent)], critic_input(feats, joint));
}

std::vector<RobotSpec> roster_specs(const Roster& roster) {
  std::vector<RobotSpec> specs;
  for (int i = 0; i < roster.size(); ++i) specs.push_back(default_spec(roster.kind_of(i)));
  return specs;
}

std::size_t joint_action_dims(const Roster& roster) {
  return std::size_t(roster.wheeled) * action_dims(RobotKind::Wheeled) +
         std::size_t(roster.quadcopter) * action_dims(RobotKind::Quadcopter);
}

namespace {

Roster roster_of(const TaskSpec& spec) {
  Roster r{0, 0};
  bool quad_seen = false;
  for (const auto& s : spec.spawns) {
    if (s.kind == RobotKind::Wheeled) {
      if (quad_seen) throw InvalidArgument("spawns must list wheeled robots first");
      ++r.wheeled;
    } else {
      quad_seen = true;
      ++r.quadcopter;
    }
  }
  return r;
}

}  // namespace

EpisodeResult run_episode(Scene& scene, const ActionSource& act, const ValueSource& value,
                          const EpisodeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Roster roster = roster_of(scene.spec());
  const int n = roster.size();
  if (n == 0) throw InvalidArgument("task has no robots");
  const auto specs = roster_specs(roster);
  ObservationContext ctx{scene.arena(), specs};
  Rng rng(derive_seed(seed, {kStreamEpisode}));

  std::vector<RobotState> states;
  for (const auto& s : scene.spec().spawns) states.push_back(spawn_state(s));

  EpisodeResult res;
  RolloutBuffer& buf = res.buffer;
  EpisodeMetrics& met = res.metrics;
  buf.roster = roster;
  buf.agents.resize(n);

  for (int t = 0; t < cfg.horizon; ++t) {
    // Sense from the pre-step snapshot.
    std::vector<std::vector<RayHit>> hits(n);
    for (int i = 0; i < n; ++i) hits[i] = cast_rays(scene, states[i], specs[i]);

    std::vector<AgentStep> step(n);
    std::vector<std::vector<double>> feats(n);
    std::vector<double> joint;
    std::vector<RobotState> proposed = states;
    for (int i = 0; i < n; ++i) {
      AgentStep& a = step[i];
      a.state = states[i];
      a.obs = encode_observation(hits[i], states, i, cfg.scheme, ctx);
      Decision d = act(i, t, a.obs, rng);
      if (d.raw.size() != specs[i].dims())
        throw InvalidArgument("agent " + std::to_string(i) + " produced an action of width " +
                              std::to_string(d.raw.size()));
      for (double v : d.raw)
        if (!std::isfinite(v))
          throw NumericError("non-finite action from agent " + std::to_string(i) + " at step " +
                             std::to_string(t));
      a.raw = d.raw;
      a.log_prob = d.log_prob;
      a.entropy = d.entropy;
      a.features = std::move(d.features);
      Action cmd;
      cmd.kind = specs[i].kind;
      for (std::size_t k = 0; k < a.raw.size(); ++k) {
        double c = std::clamp(a.raw[k], -1.0, 1.0);
        a.clamped.push_back(c);
        cmd.u[k] = c * specs[i].limits[k];
      }
      a.command = clamp_action(cmd, specs[i]);
      joint.insert(joint.end(), a.clamped.begin(), a.clamped.end());
      feats[i] = a.features;
      proposed[i] = step_dynamics(states[i], a.command, cfg.dt);
    }

    // Collisions revert the robots involved; leaving the arena reverts silently.
    auto events = check_collisions(scene, proposed, specs);
    std::vector<char> reverted(n, 0);
    auto revert = [&](int i) {
      if (reverted[i]) return false;
      reverted[i] = 1;
      proposed[i].position = states[i].position;
      proposed[i].velocity = {};
      return true;
    };
    for (const auto& e : events) {
      revert(e.robot);
      if (e.other != CollisionEvent::kObject) revert(e.other);
    }
    for (int i = 0; i < n; ++i)
      if (!scene.arena().contains(proposed[i].position)) revert(i);
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& e : check_collisions(scene, proposed, specs)) {
        changed = revert(e.robot) || changed;
        if (e.other != CollisionEvent::kObject) changed = revert(e.other) || changed;
      }
    }
    states = proposed;

    // Mark cells seen this step and attribute fresh ones per kind.
    std::vector<int> seen;
    std::array<std::vector<int>, kKindCount> seen_by_kind;
    for (int i = 0; i < n; ++i) {
      auto ids = scanned_cells(hits[i]);
      auto& kind_ids = seen_by_kind[int(specs[i].kind)];
      kind_ids.insert(kind_ids.end(), ids.begin(), ids.end());
      seen.insert(seen.end(), ids.begin(), ids.end());
    }
    for (int k = 0; k < kKindCount; ++k) {
      auto& ids = seen_by_kind[k];
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      for (int id : ids)
        if (scene.state(id) == 0) ++met.scanned_by_kind[k];
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    const int fresh = scene.mark_scanned(seen);
    for (const auto& e : events) {
      ++met.collisions_by_kind[int(specs[e.robot].kind)];
      if (e.other != CollisionEvent::kObject) ++met.collisions_by_kind[int(specs[e.other].kind)];
    }
    const int reward = compute_rewards(fresh, events);

    if (value)
      for (int i = 0; i < n; ++i) step[i].value = value(i, feats, joint);
    for (int i = 0; i < n; ++i) buf.agents[i].push_back(std::move(step[i]));
    buf.rewards.push_back(reward);
    buf.newly_scanned.push_back(fresh);
    buf.collisions.push_back(events);
    buf.episode_return += reward;
    met.total_scanned += fresh;
    met.total_collisions += int(events.size());

    if (scene.cell_count() > 0 && scene.occupied_count() == scene.cell_count()) {
      buf.terminal = true;
      break;
    }
  }
  met.steps = buf.steps();
  met.total_reward = buf.episode_return;
  met.coverage = scene.cell_count() > 0 ? scene.coverage_fraction() : 0.0;
  met.success = met.coverage >= cfg.success_threshold;
  return res;
}

EpisodeResult run_episode(Scene scene, const TeamParams& params, const EpisodeConfig& cfg,
                          std::uint64_t seed) {
  NeuralPolicy policy(params, roster_of(scene.spec()), cfg.deterministic);
  ActionSource act = [&](int agent, int, const Observation& obs, Rng& rng) {
    return policy.decide(agent, obs, rng);
  };
  ValueSource val = [&](int agent, const std::vector<std::vector<double>>& feats,
                        std::span<const double> joint) { return policy.value(agent, feats, joint); };
  return run_episode(scene, act, val, cfg, seed);
}

double success_rate(std::span<const EpisodeMetrics> metrics) {
  if (metrics.empty()) throw InvalidArgument("success rate of an empty episode list");
  int ok = 0;
  for (const auto& m : metrics) ok += m.success ? 1 : 0;
  return double(ok) / double(metrics.size());
}

void write_rollout(std::ostream& os, const RolloutBuffer& b) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%a", v);
    return std::string(buf);
  };
  os << "mrss-rollout 1\n";
  os << "roster " << b.roster.wheeled << ' ' << b.roster.quadcopter << "\n";
  os << "steps " << b.steps() << " return " << b.episode_return << " terminal " << b.terminal
     << "\n";
  for (int t = 0; t < b.steps(); ++t) {
    os << "step " << t << " reward " << b.rewards[t] << " new " << b.newly_scanned[t]
       << " collisions " << b.collisions[t].size();
    for (const auto& e : b.collisions[t]) os << ' ' << e.robot << ':' << e.other;
    os << "\n";
    for (std::size_t i = 0; i < b.agents.size(); ++i) {
      const auto& a = b.agents[i][t];
      os << "  agent " << i << " logp " << num(a.log_prob) << " entropy " << num(a.entropy)
         << " value " << num(a.value) << " raw";
      for (double v : a.raw) os << ' ' << num(v);
      os << " pos " << num(a.state.position.x) << ' ' << num(a.state.position.y) << ' '
         << num(a.state.position.z) << "\n";
    }
  }
  os << "end\n";
}

}  // namespace mrss
