#include "volseg/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "volseg/errors.hpp"

namespace volseg::optim {

AdamW::AdamW(std::vector<ad::Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ValidationError("AdamW: betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0) || !(cfg_.weight_decay >= 0.0)) {
    throw ValidationError("AdamW: eps must be positive and weight decay non-negative");
  }
  for (auto* p : params_) {
    if (p->frozen) throw ValidationError("AdamW: frozen parameter " + p->name);
    m_.emplace_back(p->tensor.size(), 0.0);
    v_.emplace_back(p->tensor.size(), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->tensor.zero_grad();
}

void AdamW::step(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("AdamW: invalid learning rate");
  for (auto* p : params_) {
    for (double g : p->tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("AdamW: non-finite gradient in " + p->name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i]->tensor.mutable_values();
    auto grad = params_[i]->tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      theta[j] -= lr * cfg_.weight_decay * theta[j];
      theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_initial, double lr_final) {
  if (total_steps == 0 || step > total_steps) {
    throw ValidationError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_final + 0.5 * (lr_initial - lr_final) * (1.0 + std::cos(phase));
}

}  // namespace volseg::optim
