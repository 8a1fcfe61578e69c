#include "mrss/tape.hpp"

#include <cmath>

#include "mrss/error.hpp"

namespace mrss {

Tape::Tape(std::vector<const ParamSet*> sets) : sets_(std::move(sets)) {
  param_grads_.resize(sets_.size());
}

Tape::Var Tape::push(std::vector<double> value, bool needs_grad,
                     std::function<void(Tape&, int)> back) {
  nodes_.push_back({std::move(value), {}, needs_grad, std::move(back)});
  return {int(nodes_.size()) - 1};
}

std::vector<double>& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tape::Var Tape::constant(std::vector<double> v) { return push(std::move(v), false, nullptr); }

Tape::Var Tape::constant(std::span<const float> v) {
  return push(std::vector<double>(v.begin(), v.end()), false, nullptr);
}

Tape::Var Tape::parameter(int set, const Section& s) {
  auto src = sets_.at(set)->view(s);
  return push(std::vector<double>(src.begin(), src.end()), true, [set, s](Tape& t, int self) {
    auto& pg = t.param_grads_[set];
    if (pg.empty()) pg.assign(t.sets_[set]->size(), 0.0);
    const auto& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) pg[s.offset + i] += g[i];
  });
}

Tape::Var Tape::linear(int set, const DenseLayer& layer, Var x) {
  const ParamSet& ps = *sets_.at(set);
  const std::size_t rows = layer.weight.rows, cols = layer.weight.cols;
  const auto& xv = nodes_[x.id].value;
  if (xv.size() != cols)
    throw InvalidArgument("linear layer " + layer.weight.name + " expects width " +
                          std::to_string(cols) + ", got " + std::to_string(xv.size()));
  const double* w = ps.values().data() + layer.weight.offset;
  const double* b = ps.values().data() + layer.bias.offset;
  const bool x_const = !nodes_[x.id].needs_grad;

  std::vector<std::size_t> nz;
  if (x_const) {
    for (std::size_t i = 0; i < cols; ++i)
      if (xv[i] != 0.0) nz.push_back(i);
  }
  const bool sparse = x_const && nz.size() * 2 < cols;

  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double acc = b[r];
    if (sparse) {
      for (auto i : nz) acc += wr[i] * xv[i];
    } else {
      for (std::size_t i = 0; i < cols; ++i) acc += wr[i] * xv[i];
    }
    y[r] = acc;
  }
  return push(std::move(y), true,
              [set, layer, x, sparse, nz = std::move(nz)](Tape& t, int self) {
                const std::size_t rows = layer.weight.rows, cols = layer.weight.cols;
                auto& pg = t.param_grads_[set];
                if (pg.empty()) pg.assign(t.sets_[set]->size(), 0.0);
                const auto& g = t.nodes_[self].grad;
                const auto& xv = t.nodes_[x.id].value;
                double* gw = pg.data() + layer.weight.offset;
                double* gb = pg.data() + layer.bias.offset;
                for (std::size_t r = 0; r < rows; ++r) {
                  const double gr = g[r];
                  gb[r] += gr;
                  if (gr == 0.0) continue;
                  double* gwr = gw + r * cols;
                  if (sparse) {
                    for (auto i : nz) gwr[i] += gr * xv[i];
                  } else {
                    for (std::size_t i = 0; i < cols; ++i) gwr[i] += gr * xv[i];
                  }
                }
                if (t.nodes_[x.id].needs_grad) {
                  const double* w = t.sets_[set]->values().data() + layer.weight.offset;
                  auto& gx = t.grad_of(x.id);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double gr = g[r];
                    const double* wr = w + r * cols;
                    for (std::size_t i = 0; i < cols; ++i) gx[i] += wr[i] * gr;
                  }
                }
              });
}

Tape::Var Tape::unary(Var x, std::function<double(double)> f,
                      std::function<double(double, double)> dfdx) {
  const auto& xv = nodes_[x.id].value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  const bool ng = nodes_[x.id].needs_grad;
  return push(std::move(y), ng, [x, dfdx = std::move(dfdx)](Tape& t, int self) {
    const auto& n = t.nodes_[self];
    auto& gx = t.grad_of(x.id);
    const auto& xv = t.nodes_[x.id].value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i] * dfdx(xv[i], n.value[i]);
  });
}

Tape::Var Tape::tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tape::Var Tape::exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tape::Var Tape::square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tape::Var Tape::scale(Var x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tape::Var Tape::shift(Var x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tape::Var Tape::clamp(Var x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tape::Var Tape::floor_at(Var x, double lo) {
  return unary(x, [lo](double v) { return std::max(v, lo); },
               [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Tape::Var Tape::binary(Var a, Var b, double (*f)(double, double), double (*da)(double, double),
                       double (*db)(double, double)) {
  const auto& av = nodes_[a.id].value;
  const auto& bv = nodes_[b.id].value;
  const std::size_t na = av.size(), nb = bv.size();
  if (na != nb && na != 1 && nb != 1)
    throw InvalidArgument("elementwise size mismatch " + std::to_string(na) + " vs " +
                          std::to_string(nb));
  const std::size_t n = std::max(na, nb);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = f(av[na == 1 ? 0 : i], bv[nb == 1 ? 0 : i]);
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(y), ng, [a, b, da, db](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const std::size_t na = t.nodes_[a.id].value.size(), nb = t.nodes_[b.id].value.size();
    const bool ga = t.nodes_[a.id].needs_grad, gb = t.nodes_[b.id].needs_grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t ia = na == 1 ? 0 : i, ib = nb == 1 ? 0 : i;
      const double x = t.nodes_[a.id].value[ia], y = t.nodes_[b.id].value[ib];
      if (ga) t.grad_of(a.id)[ia] += g[i] * da(x, y);
      if (gb) t.grad_of(b.id)[ib] += g[i] * db(x, y);
    }
  });
}

Tape::Var Tape::add(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tape::Var Tape::sub(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tape::Var Tape::mul(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

// Ties route the gradient to the first argument.
Tape::Var Tape::minimum(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return std::min(x, y); },
                [](double x, double y) { return x <= y ? 1.0 : 0.0; },
                [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tape::Var Tape::sum(Var x) {
  double s = 0.0;
  for (double v : nodes_[x.id].value) s += v;
  return push({s}, nodes_[x.id].needs_grad, [x](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    for (auto& gx : t.grad_of(x.id)) gx += g;
  });
}

Tape::Var Tape::concat(std::span<const Var> parts) {
  std::vector<double> y;
  bool ng = false;
  for (auto p : parts) {
    const auto& v = nodes_[p.id].value;
    y.insert(y.end(), v.begin(), v.end());
    ng = ng || nodes_[p.id].needs_grad;
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(std::move(y), ng, [ids = std::move(ids)](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (auto p : ids) {
      const std::size_t n = t.nodes_[p.id].value.size();
      if (t.nodes_[p.id].needs_grad) {
        auto& gp = t.grad_of(p.id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Tape::Var Tape::add_n(std::span<const Var> scalars) {
  double s = 0.0;
  bool ng = false;
  for (auto p : scalars) {
    if (nodes_[p.id].value.size() != 1) throw InvalidArgument("add_n expects scalars");
    s += nodes_[p.id].value[0];
    ng = ng || nodes_[p.id].needs_grad;
  }
  std::vector<Var> ids(scalars.begin(), scalars.end());
  return push({s}, ng, [ids = std::move(ids)](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    for (auto p : ids)
      if (t.nodes_[p.id].needs_grad) t.grad_of(p.id)[0] += g;
  });
}

std::vector<GradientVector> Tape::backward(Var loss) {
  if (nodes_.at(loss.id).value.size() != 1) throw InvalidArgument("loss must be a scalar node");
  for (std::size_t s = 0; s < sets_.size(); ++s) param_grads_[s].assign(sets_[s]->size(), 0.0);
  for (auto& n : nodes_) n.grad.clear();
  grad_of(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || !n.back) continue;
    n.back(*this, id);
  }
  for (auto& g : param_grads_)
    for (double v : g)
      if (!std::isfinite(v)) throw NumericError("non-finite gradient");
  return param_grads_;
}

}  // namespace mrss
