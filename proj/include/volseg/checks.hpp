#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volseg/gradcheck.hpp"

namespace volseg {

struct LossGradCheck {
  std::string loss;  // srpp, bd, seg or total
  ad::GradCheckReport report;
};

/// Finite-difference checks of each loss through its whole module stack on a
/// small instance (2 slices of 8x8, one class, patch 4). `module` is one of
/// all, srpp, bd, seg, total.
std::vector<LossGradCheck> model_gradchecks(const std::string& module, std::uint64_t seed = 0,
                                            std::size_t channels = 4);

}  // namespace volseg
