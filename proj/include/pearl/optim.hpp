#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pearl/errors.hpp"
#include "pearl/tensor.hpp"

namespace pearl {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are created on the first step and
// must keep matching the parameter shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const noexcept { return options_; }
  std::uint64_t step_count() const noexcept { return step_; }

  void step(std::span<Tensor> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
      throw DimensionError("adam: " + std::to_string(params.size()) + " params but " +
                           std::to_string(grads.size()) + " gradients");
    }
    if (first_.empty()) {
      for (const Tensor& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) {
      throw DimensionError("adam: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].shape() != grads[i].shape() || first_[i].size() != params[i].size()) {
        throw DimensionError("adam: shape mismatch for parameter " + std::to_string(i) +
                             ": " + shape_to_string(params[i].shape()) + " vs gradient " +
                             shape_to_string(grads[i].shape()));
      }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(options_.beta1, t);
    const double bc2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].data();
      auto g = grads[i].data();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
        v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p[j] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
      }
    }
  }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace pearl
