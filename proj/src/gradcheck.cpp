#include "volseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "volseg/errors.hpp"

namespace volseg::ad {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Parameter* const> params,
                           double h, double tolerance) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ValidationError("grad_check: step must be in [1e-6, 1e-3]");

  for (Parameter* p : params) p->tensor.zero_grad();
  const Tensor loss = f();
  if (!std::isfinite(loss.item())) throw NumericalError("grad_check: non-finite loss");
  loss.backward();

  GradCheckReport report;
  report.tolerance = tolerance;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    std::vector<double> analytic(p->tensor.grad().begin(), p->tensor.grad().end());
    analytic.resize(p->tensor.size(), 0.0);  // never reached by backward: zero gradient
    auto values = p->tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = f().item();
      values[i] = orig - h;
      const double down = f().item();
      values[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("grad_check: non-finite loss while perturbing " + p->name);
      }
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      ++report.coordinates;
      if (err > report.max_rel_error || report.worst_parameter.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_parameter = p->name;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace volseg::ad
