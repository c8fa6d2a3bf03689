#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pearl/autodiff.hpp"

namespace pearl::ad {

// Builds a scalar from graph variables bound to the given inputs.
using ScalarFunction = std::function<Var(Graph&, std::span<const Var>)>;

inline double evaluate(const ScalarFunction& f, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.parameter(t));
  return f(g, vars).value().item();
}

inline std::vector<Tensor> gradients(const ScalarFunction& f,
                                     const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.parameter(t));
  g.backward(f(g, vars));
  std::vector<Tensor> out;
  for (const Var& v : vars) out.push_back(g.grad(v));
  return out;
}

// Largest relative deviation between the supplied gradients and central
// differences with step h. The denominator is floored at 1e-3 so components
// with near-zero gradient are judged on absolute error.
inline double compare_gradients(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                                const std::vector<Tensor>& analytic, double h = 1e-5) {
  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    for (std::size_t i = 0; i < probe[t].size(); ++i) {
      const double saved = probe[t][i];
      probe[t][i] = saved + h;
      const double up = evaluate(f, probe);
      probe[t][i] = saved - h;
      const double down = evaluate(f, probe);
      probe[t][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[t][i] - numeric) /
                         std::max(std::abs(numeric), 1e-3);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline double grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                         double h = 1e-5) {
  return compare_gradients(f, inputs, gradients(f, inputs), h);
}

}  // namespace pearl::ad
