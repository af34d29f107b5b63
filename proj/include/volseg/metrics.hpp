#pragma once

#include <compare>
#include <iosfwd>
#include <string>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg::metrics {

struct Voxel {
  std::size_t z = 0;
  std::size_t y = 0;
  std::size_t x = 0;
  auto operator<=>(const Voxel&) const = default;
};

/// Surface voxels of one class, in scan order. Same rule as derive_boundary.
struct SurfacePointSet {
  std::vector<Voxel> points;
  Spacing spacing{1.f, 1.f, 1.f};
};

SurfacePointSet extract_surface(const LabelMask& mask, std::size_t k);

/// Euclidean distance between voxel centres, spacing-scaled.
double voxel_distance(const Voxel& a, const Voxel& b, const Spacing& spacing);

/// Exact distance from every grid voxel to the nearest surface point
/// (separable squared distance transform). +inf everywhere when the surface
/// is empty.
std::vector<double> distance_field(const SurfacePointSet& surface, const GridShape& shape);

/// min over `to` of the distance from each point of `from`, via distance_field.
std::vector<double> directed_distances(const SurfacePointSet& from, const SurfacePointSet& to,
                                       const GridShape& shape);

/// Nearest-rank percentile: the ceil(percent/100 * n)-th smallest value
/// (1-based), no interpolation. Values need not be sorted. Empty input throws.
double percentile_nearest_rank(std::vector<double> values, unsigned percent);

inline constexpr double kDefaultTau = 1.0;

/// Both-empty -> 1.
double dice(const LabelMask& p, const LabelMask& g, std::size_t k);
double iou(const LabelMask& p, const LabelMask& g, std::size_t k);

/// max of the two directed 95th percentiles. Both surfaces empty -> 0.
/// Exactly one empty -> the grid's space diagonal (see hd95_sentinel).
double hd95(const LabelMask& p, const LabelMask& g, std::size_t k);
double hd95_sentinel(const GridShape& shape, const Spacing& spacing);

/// Fraction of the points of both surfaces within tau of the other surface.
/// Both-empty -> 1, one-empty -> 0. Throws on tau <= 0.
double nsd(const LabelMask& p, const LabelMask& g, std::size_t k, double tau);

struct ClassMetrics {
  std::size_t class_index = 0;
  double dice = 0.0;
  double iou = 0.0;
  double hd95 = 0.0;
  double nsd = 0.0;
  double tau = kDefaultTau;
  /// Any of: tau_default, pred_empty, gt_empty, both_empty, hd95_sentinel.
  std::vector<std::string> flags;
};

struct MetricsReport {
  std::vector<ClassMetrics> classes;

  double mean_dice() const;
  double mean_iou() const;
  double mean_hd95() const;
  double mean_nsd() const;
};

/// All four metrics for every class. Shapes and class counts must match.
MetricsReport evaluate(const LabelMask& pred, const LabelMask& gt, double tau = kDefaultTau);

struct CaseReport {
  std::string case_name;
  MetricsReport report;
};

inline constexpr const char* kCsvHeader = "case,class,dice,iou,hd95,nsd,tau,flags";

/// UTF-8 CSV with kCsvHeader, one row per (case, class), 6 significant digits.
void write_csv(std::ostream& out, const std::vector<CaseReport>& cases);
std::string format_number(double v);

}  // namespace volseg::metrics
