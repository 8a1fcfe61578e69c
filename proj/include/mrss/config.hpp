#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "mrss/meta.hpp"

namespace mrss {

enum class Method { MetaMrss, Standard, DomainRand, Transfer };
enum class Ablation { CommSchemes, PocaVsPpo, HeteroVsHomo };

std::string method_name(Method m);
Method parse_method(const std::string& s);
std::string ablation_name(Ablation a);
Ablation parse_ablation(const std::string& s);

/// "2w+2q", "4q", ... (counts per kind).
Roster parse_roster(const std::string& s);
std::string roster_name(const Roster& r);

struct BudgetConfig {
  long long train = 32000;     // env steps of every training or adaptation run
  long long pretrain = 32000;  // transfer pretraining
  int eval_episodes = 20;
  int train_tasks = 10;  // pool pretrained on by transfer
  int test_tasks = 3;
  bool operator==(const BudgetConfig&) const = default;
};

enum class AblationScene {
  Task,   // held-out task 0 of the test distribution
  Desk,   // four edge-2 cubes around the spawn ring
  Full,  // four edge-6 cubes (180 cells each)
};

struct AblationConfig {
  int trials = 3;
  long long budget = 16000;
  AblationScene scene = AblationScene::Desk;
  bool operator==(const AblationConfig&) const = default;
};

struct ConvergenceConfig {
  int window = 5;
  double fraction = 0.95;
  bool operator==(const ConvergenceConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/out";
  Method method = Method::MetaMrss;
  UncertaintyConfig tasks;
  std::optional<UncertaintyConfig> test_tasks;  // held-out distribution, defaults to `tasks`
  TrainSetup train;
  MetaConfig meta;
  BudgetConfig budget;
  AblationConfig ablation;
  ConvergenceConfig convergence;
  std::string checkpoint;  // meta checkpoint read by adapt and eval

  /// Throws ConfigError.
  void validate() const;
  MetaSetup meta_setup() const;
  const UncertaintyConfig& test_distribution() const { return test_tasks ? *test_tasks : tasks; }
};

nlohmann::json to_json(const RunConfig& cfg);

/// Strict: unknown keys, wrong types and invalid values raise ConfigError.
/// Omitted keys keep the values of `base`.
RunConfig config_from_json(const nlohmann::json& doc, const RunConfig& base = {});

/// Reads a config document or a run manifest (its embedded config is used).
/// A document may name a preset with "preset": "micro" | "full".
RunConfig load_config(const std::string& path);

RunConfig preset(const std::string& name);

}  // namespace mrss
