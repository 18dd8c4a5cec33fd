#include "rxl/grad/optim.hpp"

#include <cmath>

namespace rxl::grad {

void Optimizer::step(ParameterSet& params, const Gradients& grads) {
  for (const auto& [p, g] : grads.entries()) {
    if (!g.all_finite()) throw NonFiniteError("optimizer: gradient of '" + p->name() + "' is not finite");
  }
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grads.norm();
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  ++steps_;
  const double lr = config_.learning_rate;

  if (config_.kind == OptimizerConfig::Kind::kSgd) {
    for (Parameter& p : params) {
      const Tensor* g = grads.find(p);
      if (!g) continue;
      double* w = p.value().data();
      for (std::size_t i = 0, n = g->size(); i < n; ++i) w[i] -= lr * (clip * (*g)[i]);
    }
    return;
  }

  if (moments_.size() != params.size()) {
    moments_.clear();
    for (const Parameter& p : params) {
      moments_.push_back({Tensor(p.value().shape()), Tensor(p.value().shape())});
    }
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    Moments& mo = moments_[k];
    if (mo.first.shape() != p.value().shape()) {
      throw ShapeError("optimizer: moment buffers for '" + p.name() + "' do not match " +
                       p.value().shape().str());
    }
    const Tensor* g = grads.find(p);
    double* w = p.value().data();
    double* m = mo.first.data();
    double* v = mo.second.data();
    for (std::size_t i = 0, n = p.value().size(); i < n; ++i) {
      const double gi = g ? clip * (*g)[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / correction1;
      const double vhat = v[i] / correction2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace rxl::grad
