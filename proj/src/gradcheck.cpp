#include "akid/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace akid {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& point) {
  std::vector<Variable> inputs;
  inputs.reserve(point.size());
  for (const auto& t : point) inputs.push_back(Variable::constant(t));
  const Variable out = fn(inputs);
  return out.value().item();
}

}  // namespace

GradientCheckReport check_gradient_report(const ScalarFn& fn, const std::vector<Tensor>& point, double step) {
  GradientCheckReport report;

  std::vector<Variable> inputs;
  inputs.reserve(point.size());
  for (const auto& t : point) inputs.push_back(Variable::parameter(t));
  Tape tape;
  Variable out;
  {
    TapeScope scope(tape);
    out = fn(inputs);
  }
  if (out.value().numel() != 1) throw ShapeError("check_gradient: function must return a scalar");
  const Gradients grads = tape.backward(out);

  std::vector<Tensor> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    Tensor analytic = grads.of(inputs[i]);
    Tensor numeric(point[i].shape(), point[i].dtype());
    for (std::size_t e = 0; e < point[i].numel(); ++e) {
      const double origin = point[i].at(e);
      probe[i].set(e, origin + step);
      const double plus = evaluate(fn, probe);
      probe[i].set(e, origin - step);
      const double minus = evaluate(fn, probe);
      probe[i].set(e, origin);
      numeric.set(e, (plus - minus) / (2.0 * step));
    }
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t e = 0; e < numeric.numel(); ++e) {
      const double a = analytic.at(e), n = numeric.at(e);
      diff += (a - n) * (a - n);
      norm_a += a * a;
      norm_n += n * n;
    }
    const double denom = std::sqrt(std::max(norm_a, norm_n));
    const double rel = denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
    report.relative_errors.push_back(rel);
    report.max_relative_error = std::max(report.max_relative_error, rel);
    report.analytic.push_back(std::move(analytic));
    report.numeric.push_back(std::move(numeric));
  }
  return report;
}

double check_gradient(const ScalarFn& fn, const std::vector<Tensor>& point, double step) {
  return check_gradient_report(fn, point, step).max_relative_error;
}

}  // namespace akid
