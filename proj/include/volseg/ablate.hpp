#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "volseg/train.hpp"

namespace volseg {

/// full, no_pretrain_analog, no_srpp, no_bd, no_bd_fusion.
const std::vector<std::string>& ablation_variants();

/// Base config with one variant's flag set. Window-sweep variants are named
/// window_<n>, loss-weight variants lambda_<srpp>_<bd>.
TrainConfig apply_variant(TrainConfig base, const std::string& variant);

struct AblateOptions {
  std::size_t seeds = 5;  // run seeds base.seed, base.seed + 1, ...
  bool window_sweep = false;  // adds window_3, window_6, window_12
  bool lambda_grid = false;   // adds the five loss-weight pairs
  std::vector<std::string> variants;  // overrides the default variant list if non-empty
  std::size_t threads = 0;            // 0 = hardware concurrency
};

/// Loss-weight pairs (lambda_srpp, lambda_bd) of the sensitivity grid.
const std::vector<std::pair<double, double>>& lambda_grid();

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  RunRecord record;
};

/// Every (variant, seed) run, in variant-major order regardless of
/// scheduling. Each run is written to out_dir/<variant>_seed<k> when given.
std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<Case>& dataset,
                                const AblateOptions& options,
                                const std::optional<std::filesystem::path>& out_dir = {});

/// config,seed,dice,iou,hd95,nsd
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);
/// Per variant: mean and sample standard deviation of each metric.
void write_ablation_summary(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace volseg
