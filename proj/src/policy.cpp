#include "mrss/policy.hpp"

#include <cmath>
#include <numbers>

#include "mrss/error.hpp"

namespace mrss {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

template <class T>
std::vector<double> dense(const ParamSet& p, const DenseLayer& l, std::span<const T> x,
                          bool activate) {
  const std::size_t rows = l.weight.rows, cols = l.weight.cols;
  if (x.size() != cols)
    throw InvalidArgument("layer " + l.weight.name + " expects width " + std::to_string(cols) +
                          ", got " + std::to_string(x.size()));
  const double* w = p.values().data() + l.weight.offset;
  const double* b = p.values().data() + l.bias.offset;
  std::vector<double> y(b, b + rows);
  // Column-wise accumulation skips the zero entries that dominate ray blocks.
  for (std::size_t i = 0; i < cols; ++i) {
    const double xi = double(x[i]);
    if (xi == 0.0) continue;
    for (std::size_t r = 0; r < rows; ++r) y[r] += w[r * cols + i] * xi;
  }
  if (activate)
    for (auto& v : y) v = std::tanh(v);
  return y;
}

template <class T>
std::vector<double> encode(const ParamSet& p, std::span<const T> obs) {
  const auto& enc = p.layout().encoder;
  auto h = dense<T>(p, enc[0], obs, true);
  h = dense<double>(p, enc[1], h, true);
  return dense<double>(p, enc[2], h, true);
}

}  // namespace

std::vector<double> encoder_forward(const ParamSet& p, std::span<const double> obs) {
  return encode<double>(p, obs);
}

std::vector<double> encoder_forward(const ParamSet& p, std::span<const float> obs) {
  return encode<float>(p, obs);
}

ActionDistribution actor_forward(const ParamSet& p, std::span<const double> features,
                                 double log_std_floor) {
  ActionDistribution d;
  d.mean = dense<double>(p, p.layout().actor, features, false);
  auto ls = p.view(p.layout().log_std);
  for (double v : ls) d.std.push_back(std::exp(std::max(v, log_std_floor)));
  for (double m : d.mean)
    if (!std::isfinite(m)) throw NumericError("non-finite action mean");
  return d;
}

std::vector<double> sample_action(const ActionDistribution& d, Rng& rng) {
  std::vector<double> a(d.mean.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = d.mean[i] + d.std[i] * standard_normal(rng);
  return a;
}

double log_prob(const ActionDistribution& d, std::span<const double> action) {
  double lp = 0.0;
  for (std::size_t i = 0; i < d.mean.size(); ++i) {
    double z = (action[i] - d.mean[i]) / d.std[i];
    lp += -0.5 * z * z - std::log(d.std[i]) - kHalfLog2Pi;
  }
  return lp;
}

double entropy(const ActionDistribution& d) {
  double h = 0.0;
  for (double s : d.std) h += std::log(s) + 0.5 + kHalfLog2Pi;
  return h;
}

double critic_forward(const ParamSet& p, std::span<const double> input) {
  const auto& layers = p.layout().critic;
  std::vector<double> h(input.begin(), input.end());
  for (std::size_t i = 0; i < layers.size(); ++i)
    h = dense<double>(p, layers[i], h, i + 1 < layers.size());
  return h[0];
}

Tape::Var encoder_forward(Tape& t, int set, const ParamSet& p, Tape::Var obs) {
  Tape::Var h = obs;
  for (const auto& layer : p.layout().encoder) h = t.tanh(t.linear(set, layer, h));
  return h;
}

Tape::Var actor_mean(Tape& t, int set, const ParamSet& p, Tape::Var features) {
  return t.linear(set, p.layout().actor, features);
}

Tape::Var actor_log_std(Tape& t, int set, const ParamSet& p, double log_std_floor) {
  return t.floor_at(t.parameter(set, p.layout().log_std), log_std_floor);
}

Tape::Var gaussian_log_prob(Tape& t, Tape::Var mean, Tape::Var log_std, Tape::Var action) {
  auto z = t.mul(t.sub(action, mean), t.exp(t.scale(log_std, -1.0)));
  auto per_dim = t.sub(t.scale(t.square(z), -0.5), log_std);
  auto lp = t.sum(per_dim);
  return t.shift(lp, -kHalfLog2Pi * double(t.value(mean).size()));
}

Tape::Var gaussian_entropy(Tape& t, Tape::Var log_std) {
  return t.shift(t.sum(log_std), (0.5 + kHalfLog2Pi) * double(t.value(log_std).size()));
}

Tape::Var critic_forward(Tape& t, int set, const ParamSet& p, Tape::Var input) {
  const auto& layers = p.layout().critic;
  Tape::Var h = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = t.linear(set, layers[i], h);
    if (i + 1 < layers.size()) h = t.tanh(h);
  }
  return h;
}

double counterfactual_advantage(const JointQ& q, std::span<const double> joint, AgentSlice agent,
                                const ActionSampler& sample, int mc_samples, Rng& rng) {
  if (mc_samples < 1) throw InvalidArgument("counterfactual baseline needs M >= 1 samples");
  if (agent.offset + agent.dims > joint.size()) throw InvalidArgument("agent slice out of range");
  const double q_taken = q(joint);
  std::vector<double> alt(joint.begin(), joint.end());
  std::span<double> slot(alt.data() + agent.offset, agent.dims);
  double acc = 0.0;
  for (int m = 0; m < mc_samples; ++m) {
    sample(rng, slot);
    acc += q_taken - q(alt);
  }
  return acc / mc_samples;
}

double counterfactual_advantage_exact(const JointQ& q, std::span<const double> joint,
                                      AgentSlice agent, const DiscretePolicy& pi) {
  if (pi.actions.size() != pi.probs.size() || pi.actions.empty())
    throw InvalidArgument("discrete policy needs one probability per action");
  const double q_taken = q(joint);
  std::vector<double> alt(joint.begin(), joint.end());
  double baseline = 0.0;
  for (std::size_t k = 0; k < pi.actions.size(); ++k) {
    if (pi.actions[k].size() != agent.dims) throw InvalidArgument("action width mismatch");
    std::copy(pi.actions[k].begin(), pi.actions[k].end(), alt.begin() + agent.offset);
    baseline += pi.probs[k] * q(alt);
  }
  return q_taken - baseline;
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& s,
               const AdamConfig& cfg) {
  if (grad.size() != params.size()) throw InvalidArgument("adam: gradient length mismatch");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(s.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * grad[i];
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = s.m[i] / c1, vhat = s.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace mrss
