#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mrss/episode.hpp"
#include "mrss/params.hpp"
#include "mrss/policy.hpp"
#include "mrss/tape.hpp"

namespace mrss {

enum class Variant { Poca, Ppo };

struct TrainerConfig {
  double clip = 0.2;
  double entropy_coef = 0.005;
  double gae_lambda = 0.95;
  int epochs = 3;
  double gamma = 0.99;
  double learning_rate = 3e-4;
  int minibatch = 256;  // decision steps per minibatch
  double value_coef = 0.5;
  int mc_samples = 16;
  double max_grad_norm = 0.5;  // 0 disables clipping
  Variant variant = Variant::Poca;

  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

struct TrainStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double mean_advantage = 0.0;
  double grad_norm = 0.0;
  int updates = 0;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// `values` holds one more entry than `rewards` (the bootstrap value).
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      double gamma, double lambda);

/// Architecture knobs shared by both robot kinds.
struct NetArch {
  std::size_t hidden = 64;
  std::size_t feature = 32;
  std::vector<std::size_t> critic_hidden{64, 64};
  double init_log_std = -0.5;
  bool operator==(const NetArch&) const = default;
};

struct TrainSetup {
  Roster roster;
  EpisodeConfig episode;
  TrainerConfig trainer;
  NetArch arch;
  int trajectories = 20;  // K episodes collected per round
};

NetConfig net_config(const TrainSetup& setup, RobotKind kind);
TeamParams init_team(const TrainSetup& setup, std::uint64_t seed);

struct Sample {
  int episode = 0;
  int step = 0;
};

/// Old-policy quantities frozen before optimization: per-agent advantages and
/// per-kind value targets for every decision step.
struct PreparedBatch {
  std::vector<const RolloutBuffer*> episodes;
  std::vector<Sample> samples;
  std::vector<std::vector<double>> advantages;           // [sample][agent]
  std::vector<std::array<double, kKindCount>> returns;  // [sample][kind]
  Roster roster;
  Variant variant = Variant::Poca;
};

/// POCA: advantage = lambda-return of the agent kind's Q critic minus the
/// counterfactual baseline over the agent's own policy (M samples).
/// PPO: GAE advantages over the state-value critic (action inputs zeroed).
PreparedBatch prepare_batch(std::span<const RolloutBuffer> episodes, const TeamParams& old,
                            const TrainerConfig& cfg, std::uint64_t seed);

struct LossParts {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double mean_advantage = 0.0;
};

struct LossGraph {
  Tape tape;
  Tape::Var total;
  Tape::Var policy;   // -mean clipped surrogate
  Tape::Var value;    // mean squared critic error
  Tape::Var entropy;  // mean policy entropy
  LossParts parts;
};

/// Clipped surrogate over the selected samples, advantages normalized across
/// the selection: -mean(surrogate) - beta*mean(entropy) + c_v*mean(value err^2).
LossGraph build_loss(const PreparedBatch& batch, std::span<const int> sample_ids,
                     const TeamParams& current, const TrainerConfig& cfg);

struct BatchGradient {
  std::array<GradientVector, kKindCount> grad;
  double loss = 0.0;
  LossParts parts;
};

/// Gradient of the loss over every sample of the batch, accumulated in
/// chunks so the tape stays small. Equals build_loss over all samples.
BatchGradient batch_gradient(const PreparedBatch& batch, const TeamParams& current,
                             const TrainerConfig& cfg, int chunk = 128);

/// min(r*A, clamp(r, 1-eps, 1+eps)*A) with r = exp(logp_new - logp_old).
Tape::Var clipped_surrogate(Tape& t, Tape::Var logp_new, double logp_old, double advantage,
                            double clip);

/// Whole-buffer losses evaluated with `params` as the behaviour policy.
LossGraph poca_loss(std::span<const RolloutBuffer> episodes, const TeamParams& params,
                    const TrainerConfig& cfg, std::uint64_t seed);
LossGraph ppo_loss(std::span<const RolloutBuffer> episodes, const TeamParams& params,
                   const TrainerConfig& cfg, std::uint64_t seed);

/// Gradients of a loss graph, one per kind (empty for absent kinds).
std::array<GradientVector, kKindCount> loss_gradient(LossGraph& g);

struct RoundRecord {
  long long env_steps = 0;  // cumulative, after this round's collection
  double mean_reward = 0.0;
  double success_rate = 0.0;
  std::array<double, kKindCount> kind_reward{};
  TrainStats stats;
};

using TaskSampler = std::function<TaskSpec(int round)>;

struct InnerResult {
  TeamParams params;
  std::vector<RoundRecord> curve;
  long long env_steps = 0;
  TrainStats last;
};

struct OptimizerState {
  std::array<AdamState, kKindCount> adam;
};

/// Collects K episodes with the current parameters.
std::vector<EpisodeResult> collect(const TaskSpec& task, const TeamParams& params,
                                   const TrainSetup& setup, std::uint64_t seed);

/// Multi-epoch minibatch optimization of both parameter families on one batch.
TrainStats optimize(std::span<const RolloutBuffer> episodes, TeamParams& params,
                    OptimizerState& opt, const TrainerConfig& cfg, std::uint64_t seed);

/// `rounds` iterations of collect-then-optimize from `params`.
InnerResult train_inner(const TaskSampler& tasks, TeamParams params, const TrainSetup& setup,
                        int rounds, std::uint64_t seed, long long step_offset = 0);
InnerResult train_inner(const TaskSpec& task, TeamParams params, const TrainSetup& setup,
                        int rounds, std::uint64_t seed, long long step_offset = 0);

/// Worst-case environment steps of one round: K full-horizon episodes.
long long round_cost(const TrainSetup& setup);

/// Returns true once training may stop early, given the curve so far.
using StopRule = std::function<bool(const std::vector<RoundRecord>& curve)>;

/// Like train_inner, but a round only starts when its worst-case cost still
/// fits in `budget` steps (counted from step_offset).
InnerResult train_budget(const TaskSampler& tasks, TeamParams params, const TrainSetup& setup,
                         long long budget, std::uint64_t seed, long long step_offset = 0,
                         const StopRule& stop = {});
InnerResult train_budget(const TaskSpec& task, TeamParams params, const TrainSetup& setup,
                         long long budget, std::uint64_t seed, long long step_offset = 0,
                         const StopRule& stop = {});

}  // namespace mrss
