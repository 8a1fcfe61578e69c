#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mrss/trainer.hpp"
#include "mrss/world.hpp"

namespace mrss {

struct MetaConfig {
  int iterations = 100;
  int tasks_per_batch = 10;
  int trajectories = 20;  // K per task, for adaptation and for validation
  int inner_rounds = 1;   // collect-then-optimize rounds of each task adaptation
  double outer_lr = 1e-3;
  double max_grad_norm = 0.5;  // 0 disables clipping of the outer gradient
  int task_pool = 0;           // > 0: draw batches from a fixed pool of training tasks
  int checkpoint_every = 10;
  int workers = 1;  // tasks adapted concurrently within an iteration

  void validate() const;
  bool operator==(const MetaConfig&) const = default;
};

struct MetaSetup {
  UncertaintyConfig tasks;
  TrainSetup train;  // roster, episode, inner trainer and architecture
  MetaConfig meta;
};

/// Training and held-out tasks come from disjoint seed streams of the same
/// distribution.
TaskSpec train_task(const UncertaintyConfig& dist, int index);
TaskSpec test_task(const UncertaintyConfig& dist, int index);

struct MetaState {
  TeamParams params;
  std::array<AdamState, kKindCount> adam;
  int iteration = 0;
  long long env_steps = 0;
  std::vector<double> losses;   // mean validation loss per iteration
  std::vector<double> rewards;  // mean validation episode reward per iteration
  std::vector<long long> steps;  // cumulative env steps after each iteration

  bool operator==(const MetaState&) const = default;
};

MetaState meta_init(const MetaSetup& setup, std::uint64_t seed);

struct TaskSeeds {
  std::uint64_t inner = 0;
  std::uint64_t validation = 0;
  std::uint64_t baseline = 0;
};

TaskSeeds meta_task_seeds(std::uint64_t seed, int iteration, int task_index);

/// Tasks used by meta iteration `iteration`.
std::vector<TaskSpec> meta_batch(const MetaSetup& setup, int iteration, std::uint64_t seed);

struct MetaGradient {
  std::array<GradientVector, kKindCount> grad;
  double loss = 0.0;
  double reward = 0.0;
  long long env_steps = 0;
};

/// First-order meta gradient: each task adapts theta with train_inner, then
/// the validation-loss gradient at the adapted parameters is averaged over
/// tasks in task order.
MetaGradient meta_outer_gradient(const MetaSetup& setup, const TeamParams& theta,
                                 std::span<const TaskSpec> tasks, int iteration,
                                 std::uint64_t seed);

/// One outer iteration (task batch, outer gradient, outer Adam step).
void meta_step(const MetaSetup& setup, MetaState& state, std::uint64_t seed);

/// Iterates from `state` until setup.meta.iterations. Randomness depends only
/// on (seed, iteration), so a resumed run matches an uninterrupted one.
MetaState meta_train(const MetaSetup& setup, MetaState state, std::uint64_t seed,
                     const std::function<void(const MetaState&)>& on_iteration = {});

void write_meta_state(std::ostream& os, const MetaState& s);
MetaState read_meta_state(std::istream& is);
void save_meta_state(const std::string& path, const MetaState& s);
MetaState load_meta_state(const std::string& path);

struct EvalResult {
  int episodes = 0;
  double mean_reward = 0.0;
  double success_rate = 0.0;
  double mean_coverage = 0.0;
  std::array<double, kKindCount> kind_reward{};
  std::vector<EpisodeMetrics> per_episode;
};

/// Runs `episodes` frozen-policy episodes on the task.
EvalResult evaluate(const TeamParams& params, const TaskSpec& task, const EpisodeConfig& cfg,
                    int episodes, std::uint64_t seed);

/// Fine-tunes the meta parameters on a new task within `budget` steps.
InnerResult adapt(const TeamParams& meta, const TaskSpec& task, const TrainSetup& setup,
                  long long budget, std::uint64_t seed, const StopRule& stop = {});

/// Trains from a random initialization directly on the test task.
InnerResult baseline_standard(const TaskSpec& task, const TrainSetup& setup, long long budget,
                              std::uint64_t seed, const StopRule& stop = {});

struct MethodResult {
  InnerResult train;
  EvalResult eval;
  long long pretrain_steps = 0;
};

/// One policy trained on a fresh task every round, then evaluated frozen.
MethodResult baseline_domain_randomization(const TaskSampler& tasks, const TaskSpec& test,
                                           const TrainSetup& setup, long long budget,
                                           int eval_episodes, std::uint64_t seed);

/// Pretraining pooled over the training tasks, then fine-tuning on the test
/// task; the curve covers the fine-tuning phase.
MethodResult baseline_transfer(std::span<const TaskSpec> train_tasks, const TaskSpec& test,
                               const TrainSetup& setup, long long pretrain_budget,
                               long long finetune_budget, int eval_episodes, std::uint64_t seed);

/// Step-function view of a curve on a fixed env-step grid; NaN before the
/// first recorded point.
std::vector<double> resample_curve(const std::vector<RoundRecord>& curve,
                                   std::span<const long long> grid);

}  // namespace mrss
