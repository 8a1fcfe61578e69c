#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mrss/dynamics.hpp"
#include "mrss/params.hpp"
#include "mrss/sensing.hpp"
#include "mrss/world.hpp"

namespace mrss {

struct EpisodeConfig {
  int horizon = 500;
  double dt = 0.1;
  double success_threshold = 0.9;
  CommScheme scheme = scheme_from_index(1);
  bool deterministic = false;  // act with the policy mean instead of sampling

  void validate() const;
  bool operator==(const EpisodeConfig&) const = default;
};

/// One agent's record at one decision step. Actions are in normalized units:
/// the physical command is clamp(raw, -1, 1) scaled by the kind's limits.
struct AgentStep {
  Observation obs;
  std::vector<double> raw;
  std::vector<double> clamped;
  Action command;
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;  // critic estimate of the agent's kind at (s_t, u_t)
  std::vector<double> features;
  RobotState state;  // pose at which the observation was taken
};

struct RolloutBuffer {
  Roster roster;
  std::vector<std::vector<AgentStep>> agents;  // [agent][step]
  std::vector<int> rewards;                    // team reward per step
  std::vector<int> newly_scanned;
  std::vector<std::vector<CollisionEvent>> collisions;
  int episode_return = 0;
  bool terminal = false;  // ended because every cell was scanned

  int steps() const { return int(rewards.size()); }
};

struct EpisodeMetrics {
  double coverage = 0.0;
  bool success = false;
  int total_reward = 0;
  int steps = 0;
  int total_scanned = 0;
  int total_collisions = 0;
  std::array<int, kKindCount> scanned_by_kind{};  // a cell counts for every kind that saw it first
  std::array<int, kKindCount> collisions_by_kind{};

  /// Per-kind reward: cells first seen by the kind minus its collision events.
  double kind_reward(RobotKind k) const {
    return scanned_by_kind[int(k)] - collisions_by_kind[int(k)];
  }
};

struct EpisodeResult {
  RolloutBuffer buffer;
  EpisodeMetrics metrics;
};

/// +1 per newly scanned cell, -1 per collision event.
int compute_rewards(int newly_scanned, std::span<const CollisionEvent> collisions);

struct Decision {
  std::vector<double> raw;
  double log_prob = 0.0;
  double entropy = 0.0;
  std::vector<double> features;
};

using ActionSource =
    std::function<Decision(int agent, int step, const Observation& obs, Rng& rng)>;
/// Value estimate for `agent` given every agent's features and the joint
/// clamped actions.
using ValueSource = std::function<double(int agent, const std::vector<std::vector<double>>& feats,
                                         std::span<const double> joint)>;

/// Builds the critic input [features of every agent, joint clamped actions].
std::vector<double> critic_input(const std::vector<std::vector<double>>& feats,
                                 std::span<const double> joint);

/// Actor/critic evaluation for a roster from per-kind parameter families.
class NeuralPolicy {
 public:
  NeuralPolicy(const TeamParams& params, Roster roster, bool deterministic);
  Decision decide(int agent, const Observation& obs, Rng& rng) const;
  double value(int agent, const std::vector<std::vector<double>>& feats,
               std::span<const double> joint) const;

 private:
  const TeamParams& params_;
  Roster roster_;
  bool deterministic_;
};

std::vector<RobotSpec> roster_specs(const Roster& roster);
std::size_t joint_action_dims(const Roster& roster);

/// Runs one episode on `scene` (mutated; pass a fresh copy). Deterministic in
/// (scene, policy, cfg, seed). Throws NumericError naming agent and step when
/// an action is not finite.
EpisodeResult run_episode(Scene& scene, const ActionSource& act, const ValueSource& value,
                          const EpisodeConfig& cfg, std::uint64_t seed);
EpisodeResult run_episode(Scene scene, const TeamParams& params, const EpisodeConfig& cfg,
                          std::uint64_t seed);

double success_rate(std::span<const EpisodeMetrics> metrics);

void write_rollout(std::ostream& os, const RolloutBuffer& buffer);

}  // namespace mrss
