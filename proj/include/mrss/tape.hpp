#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mrss/params.hpp"

namespace mrss {

/// Reverse-mode autodiff over vector-valued nodes. Parameters are read in
/// place from bound ParamSets; backward() returns one flat gradient per bound
/// set, indexed like ParamSet::values(). Nodes are created in topological
/// order, so backward is a single reverse sweep.
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  explicit Tape(std::vector<const ParamSet*> sets);

  Var constant(std::vector<double> v);
  Var constant(std::span<const float> v);
  Var scalar(double v) { return constant(std::vector<double>{v}); }
  Var parameter(int set, const Section& s);

  /// W x + b. Zero entries of a constant input are skipped.
  Var linear(int set, const DenseLayer& layer, Var x);

  Var tanh(Var x);
  Var exp(Var x);
  Var square(Var x);
  // Elementwise with size-1 broadcasting on either side.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var minimum(Var a, Var b);
  Var scale(Var x, double c);
  Var shift(Var x, double c);
  Var clamp(Var x, double lo, double hi);
  Var floor_at(Var x, double lo);  // max(x, lo)
  Var sum(Var x);
  Var concat(std::span<const Var> parts);
  Var add_n(std::span<const Var> scalars);

  const std::vector<double>& value(Var x) const { return nodes_[x.id].value; }
  double scalar_value(Var x) const { return nodes_[x.id].value.at(0); }
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradient of the scalar node `loss`. Throws NumericError on non-finite
  /// gradients.
  std::vector<GradientVector> backward(Var loss);

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;
  };

  Var push(std::vector<double> value, bool needs_grad, std::function<void(Tape&, int)> back);
  std::vector<double>& grad_of(int id);
  Var binary(Var a, Var b, double (*f)(double, double), double (*da)(double, double),
             double (*db)(double, double));
  Var unary(Var x, std::function<double(double)> f, std::function<double(double, double)> dfdx);

  std::vector<const ParamSet*> sets_;
  std::vector<Node> nodes_;
  std::vector<GradientVector> param_grads_;
};

}  // namespace mrss
