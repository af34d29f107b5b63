#pragma once

#include <functional>
#include <span>
#include <string>

#include "volseg/autodiff.hpp"

namespace volseg::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Central finite differences on every coordinate of every non-frozen
/// parameter, compared with the reverse-mode gradient of f. The error per
/// coordinate is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
/// f must rebuild its graph on each call and be deterministic. Step h must be
/// in [1e-6, 1e-3].
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Parameter* const> params,
                           double h = 1e-5, double tolerance = 1e-4);

}  // namespace volseg::ad
