#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrss/config.hpp"
#include "mrss/meta.hpp"

namespace mrss {

struct CurvePoint {
  long long steps = 0;
  double value = 0.0;
};

std::vector<CurvePoint> reward_curve(const std::vector<RoundRecord>& rounds);

/// Trailing moving average; the first window-1 points average what exists.
std::vector<double> moving_average(std::span<const CurvePoint> curve, int window);

/// Smallest env step from which the moving average stays at or above
/// `fraction` of its final value. nullopt ("not converged") when the final
/// moving average is not positive.
std::optional<long long> convergence_steps(std::span<const CurvePoint> curve, int window,
                                           double fraction = 0.95);

/// First env step at which the moving average reaches `target`.
std::optional<long long> steps_to_target(std::span<const CurvePoint> curve, double target,
                                         int window);

/// Stop rule that fires once the moving average of the rewards reaches `target`.
StopRule target_stop(double target, int window);

struct MetricsRecord {
  std::string method;
  std::uint64_t seed = 0;
  int task = 0;
  int round = 0;
  long long env_steps = 0;
  double mean_reward = 0.0;
  std::array<double, kKindCount> kind_reward{};
  double success_rate = 0.0;
  double loss = 0.0;
  double wall_clock = 0.0;  // seconds, written to timing.csv only
};

MetricsRecord metrics_record(const std::string& method, std::uint64_t seed, int task, int round,
                             const RoundRecord& r);

/// metrics.csv holds only reproducible columns; wall-clock goes to a separate
/// timing.csv so reruns compare byte for byte. Rows must have increasing env
/// steps within (method, seed, task).
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& dir);
  void append(const MetricsRecord& r);
  void flush();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Four cubes of the given edge on a 5e x 5e floor, robots on a ring in the
/// middle. Edge 6 gives 180 cells per cube.
TaskSpec four_cube_scene(const Roster& roster, int edge);
/// The scene shared by every arm of an ablation.
TaskSpec ablation_scene(const RunConfig& cfg, const Roster& roster);

struct ArmCurves {
  std::string name;
  std::vector<std::vector<RoundRecord>> trials;
};

struct CurveStats {
  std::vector<long long> grid;
  std::vector<double> mean;
  std::vector<double> stddev;  // population std over trials
};

CurveStats curve_stats(const ArmCurves& arm, std::span<const long long> grid);

/// Hyperparameter header line echoed by comparison outputs.
std::string hyperparameter_header(const RunConfig& cfg);

/// Top-level commands. Each writes manifest.json into cfg.out and throws
/// ConfigError / NumericError / std::runtime_error.
void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs = {});
void cmd_gen_tasks(const RunConfig& cfg, int n, const std::string& split, std::ostream* log);
void cmd_train(const RunConfig& cfg, std::ostream* log);
void cmd_meta_train(const RunConfig& cfg, const std::string& resume, std::ostream* log);
void cmd_adapt(const RunConfig& cfg, const std::string& checkpoint, std::ostream* log);
void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, std::ostream* log);
void cmd_ablate(const RunConfig& cfg, Ablation which, std::ostream* log);

/// Maps an exception from a command to the CLI exit code: 2 for config and
/// usage errors, 3 for numeric failures, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace mrss
