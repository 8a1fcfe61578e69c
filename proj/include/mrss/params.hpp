#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mrss/rng.hpp"
#include "mrss/robot.hpp"

namespace mrss {

/// Architecture of one robot kind's policy family: 3-layer tanh encoder,
/// Gaussian actor head with state-independent log-std, and an MLP critic over
/// the team's concatenated features and joint actions.
struct NetConfig {
  std::size_t obs_dim = 0;
  std::size_t hidden = 64;
  std::size_t feature = 32;
  std::size_t action_dim = 0;
  std::size_t critic_input = 0;
  std::vector<std::size_t> critic_hidden{64, 64};
  double init_log_std = -0.5;

  bool operator==(const NetConfig&) const = default;
};

/// Contiguous block of the flat parameter vector; row-major rows x cols.
struct Section {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const Section&) const = default;
};

struct DenseLayer {
  Section weight;
  Section bias;
};

struct NetLayout {
  std::array<DenseLayer, 3> encoder;
  DenseLayer actor;
  Section log_std;
  std::vector<DenseLayer> critic;  // hidden layers followed by the scalar output layer
  std::vector<Section> sections;   // every section in offset order
  std::size_t total = 0;
};

NetLayout make_layout(const NetConfig& cfg);

using GradientVector = std::vector<double>;

class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(NetConfig cfg);  // all parameters zero

  const NetConfig& config() const { return cfg_; }
  const NetLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> view(const Section& s) { return {values_.data() + s.offset, s.size()}; }
  std::span<const double> view(const Section& s) const {
    return {values_.data() + s.offset, s.size()};
  }
  const Section& section(const std::string& name) const;

  std::vector<double> flatten() const { return values_; }
  void unflatten(std::span<const double> flat);
  bool all_finite() const;

  bool operator==(const ParamSet& o) const { return cfg_ == o.cfg_ && values_ == o.values_; }

 private:
  NetConfig cfg_;
  NetLayout layout_;
  std::vector<double> values_;
};

/// Glorot-uniform weights, zero biases, actor mean weights scaled down,
/// log-std at cfg.init_log_std.
ParamSet init_params(const NetConfig& cfg, Rng& rng);

/// One parameter family per robot kind (wheeled, quadcopter). A family is
/// empty when the roster has no robot of that kind.
struct TeamParams {
  std::array<ParamSet, kKindCount> by_kind;

  ParamSet& operator[](RobotKind k) { return by_kind[int(k)]; }
  const ParamSet& operator[](RobotKind k) const { return by_kind[int(k)]; }
  bool operator==(const TeamParams&) const = default;
};

// Versioned text dump with named sections; values are hex floats so the
// round trip is exact.
void write_params(std::ostream& os, const ParamSet& p);
ParamSet read_params(std::istream& is);
void write_vector(std::ostream& os, const std::string& name, std::span<const double> v);
std::vector<double> read_vector(std::istream& is, const std::string& name);

}  // namespace mrss
