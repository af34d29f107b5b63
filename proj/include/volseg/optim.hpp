#pragma once

#include <cstddef>
#include <vector>

#include "volseg/autodiff.hpp"

namespace volseg::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  /// Frozen parameters are rejected.
  AdamW(std::vector<ad::Parameter*> params, AdamWConfig cfg = {});

  /// Applies one update from the gradients currently stored on the
  /// parameters (missing gradient = 0). Every gradient is checked before any
  /// parameter is touched; a non-finite entry throws NumericalError and
  /// leaves parameters and moments unchanged.
  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return t_; }
  const std::vector<ad::Parameter*>& parameters() const { return params_; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// lr_final + (lr_initial - lr_final) (1 + cos(pi step / total)) / 2.
/// Throws ValidationError unless 0 <= step <= total and total > 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_initial, double lr_final);

}  // namespace volseg::optim
