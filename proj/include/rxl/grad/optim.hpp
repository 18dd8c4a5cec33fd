#pragma once

#include <cstdint>
#include <vector>

#include "rxl/grad/tape.hpp"

namespace rxl::grad {

struct OptimizerConfig {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Applies one update. Parameters absent from `grads` are treated as having zero gradient.
  // Throws NonFiniteError naming the parameter when a gradient is not finite.
  void step(ParameterSet& params, const Gradients& grads);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };

  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace rxl::grad
