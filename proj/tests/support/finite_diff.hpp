#pragma once

// Central finite-difference oracle. Independent of the tape: it only evaluates the forward
// function at perturbed parameter values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rxl/grad/tape.hpp"

namespace rxl::testing {

struct GradCheckEntry {
  std::string name;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.relative_error);
    return w;
  }
  std::string worst_name() const {
    double w = -1.0;
    std::string n;
    for (const auto& e : entries)
      if (e.relative_error > w) {
        w = e.relative_error;
        n = e.name;
      }
    return n;
  }
};

// `loss` builds the scalar on the given tape from the current parameter values.
inline GradCheckReport check_gradients(grad::ParameterSet& params,
                                       const std::function<grad::Var(grad::Tape&)>& loss,
                                       double step = 1e-5, double floor = 1e-6,
                                       std::size_t max_elements_per_param = 0) {
  grad::Gradients analytic;
  {
    grad::Tape tape;
    grad::Var root = loss(tape);
    analytic = tape.backward(root);
  }
  auto evaluate = [&]() {
    grad::Tape tape(grad::Tape::Mode::kInference);
    return loss(tape).item();
  };

  GradCheckReport report;
  for (grad::Parameter& p : params) {
    const grad::Tensor a = analytic.get(p);
    const std::size_t n = p.value().size();
    const std::size_t stride =
        (max_elements_per_param == 0 || n <= max_elements_per_param) ? 1 : n / max_elements_per_param;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0, maxabs = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      double& w = p.value()[i];
      const double orig = w;
      w = orig + step;
      const double fp = evaluate();
      w = orig - step;
      const double fm = evaluate();
      w = orig;
      const double num = (fp - fm) / (2.0 * step);
      const double d = a[i] - num;
      diff2 += d * d;
      a2 += a[i] * a[i];
      n2 += num * num;
      maxabs = std::max(maxabs, std::abs(d));
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
    report.entries.push_back({p.name(), std::sqrt(diff2) / denom, maxabs});
  }
  return report;
}

}  // namespace rxl::testing
