#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mrss/params.hpp"
#include "mrss/rng.hpp"
#include "mrss/tape.hpp"

namespace mrss {

inline constexpr double kLogStdFloor = -5.0;

// ---- Dense (tape-free) evaluation, used for rollouts and baselines.

std::vector<double> encoder_forward(const ParamSet& p, std::span<const double> obs);
std::vector<double> encoder_forward(const ParamSet& p, std::span<const float> obs);

struct ActionDistribution {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Mean from the actor head; std = exp(max(log_std, log_std_floor)).
ActionDistribution actor_forward(const ParamSet& p, std::span<const double> features,
                                 double log_std_floor = kLogStdFloor);
std::vector<double> sample_action(const ActionDistribution& d, Rng& rng);
double log_prob(const ActionDistribution& d, std::span<const double> action);
double entropy(const ActionDistribution& d);

double critic_forward(const ParamSet& p, std::span<const double> input);

// ---- Tape versions; `set` is the index of `p` among the tape's bound sets.

Tape::Var encoder_forward(Tape& t, int set, const ParamSet& p, Tape::Var obs);
Tape::Var actor_mean(Tape& t, int set, const ParamSet& p, Tape::Var features);
Tape::Var actor_log_std(Tape& t, int set, const ParamSet& p, double log_std_floor = kLogStdFloor);
Tape::Var gaussian_log_prob(Tape& t, Tape::Var mean, Tape::Var log_std, Tape::Var action);
Tape::Var gaussian_entropy(Tape& t, Tape::Var log_std);
Tape::Var critic_forward(Tape& t, int set, const ParamSet& p, Tape::Var input);

// ---- Counterfactual advantage.

/// Critic evaluated at a fixed global state as a function of the joint action.
using JointQ = std::function<double(std::span<const double> joint_action)>;

/// Slice of the joint action vector owned by one agent.
struct AgentSlice {
  std::size_t offset = 0;
  std::size_t dims = 0;
};

/// Draws one action for the marginalized agent into `out`.
using ActionSampler = std::function<void(Rng&, std::span<double> out)>;

/// Q(s,u) minus the Monte-Carlo estimate of E_{u'~pi}[Q(s,(u^-a,u'))] from M
/// policy samples. Throws InvalidArgument when M < 1.
double counterfactual_advantage(const JointQ& q, std::span<const double> joint, AgentSlice agent,
                                const ActionSampler& sample, int mc_samples, Rng& rng);

struct DiscretePolicy {
  std::vector<std::vector<double>> actions;
  std::vector<double> probs;
};

/// Same quantity with the marginalization computed by exact enumeration.
double counterfactual_advantage_exact(const JointQ& q, std::span<const double> joint,
                                      AgentSlice agent, const DiscretePolicy& pi);

// ---- Adam.

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;
  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg);

}  // namespace mrss
