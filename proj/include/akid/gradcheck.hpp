#pragma once

#include <functional>
#include <span>
#include <vector>

#include "akid/autodiff.hpp"

namespace akid {

// Scalar-valued function of one or more tensors.
using ScalarFn = std::function<Variable(std::span<const Variable>)>;

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> relative_errors;  // one per input
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
};

// Compares tape gradients of `fn` at `point` with central finite differences
// of step `step`. The error per input is the norm-wise relative error
// |analytic - numeric| / max(|analytic|, |numeric|), defined as 0 when both
// vanish. Run at f64 for meaningful tolerances.
GradientCheckReport check_gradient_report(const ScalarFn& fn, const std::vector<Tensor>& point, double step = 1e-3);

double check_gradient(const ScalarFn& fn, const std::vector<Tensor>& point, double step = 1e-3);

}  // namespace akid
