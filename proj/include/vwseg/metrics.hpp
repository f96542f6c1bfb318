#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vwseg/annotation_io.hpp"
#include "vwseg/contour_geometry.hpp"

namespace vwseg {

/// 2|a ∩ b| / (|a| + |b|); 1 when both are empty.
double dice(const Mask& a, const Mask& b);

/// |area(pred) - area(gt)| / area(gt) over set-pixel counts.
double area_diff(const Mask& pred, const Mask& gt);

/// Wall area over outer area. Requires lumen ⊆ outer and a non-empty outer.
double nwi(const Mask& lumen, const Mask& outer);
double nwi_diff(const Mask& pred_lumen, const Mask& pred_outer, const Mask& gt_lumen,
                const Mask& gt_outer);

/// Symmetric Hausdorff distance over contour points, in pixels.
double hausdorff(const CanonicalContour& a, const CanonicalContour& b);

/// Hausdorff distance divided by the equivalent radius sqrt(gt_area / pi).
double hausdorff_norm(const CanonicalContour& pred, const CanonicalContour& gt, double gt_area);

struct SliceMetrics {
  double dice_lumen = 0.0;
  double dice_wall = 0.0;
  double lumen_area_diff = 0.0;
  double wall_area_diff = 0.0;
  double nwi_diff = 0.0;
  double hd_lumen_norm = 0.0;
  double hd_wall_norm = 0.0;
};

inline constexpr std::array<const char*, 7> kMetricNames{
    "dice_lumen",    "dice_wall", "lumen_area_diff", "wall_area_diff",
    "nwi_diff",      "hd_lumen_norm", "hd_wall_norm"};

std::array<double, 7> metric_values(const SliceMetrics& m);

struct SliceEval {
  int slice_index = 0;
  Artery artery = Artery::ICAL;
  bool has_gt = false;
  bool has_pred = false;
  /// Present iff both sides supply a lumen and an outer contour.
  std::optional<SliceMetrics> metrics;

  bool matched() const { return metrics.has_value(); }
};

struct Aggregate {
  double mean = 0.0;
  /// Population standard deviation over matched slices.
  double std = 0.0;
};

struct ScoreWeights {
  double dice_lumen = 0.5;
  double dice_wall = 0.5;
};

struct MetricsReport {
  std::string volume_id;
  /// Slice ascending, then artery order.
  std::vector<SliceEval> slices;
  std::size_t matched_count = 0;
  std::size_t gt_count = 0;
  std::size_t unmatched_count = 0;
  /// Empty when no slice matched.
  std::optional<std::array<Aggregate, 7>> aggregates;
  double quantitative_score = 0.0;
};

struct RegionMasks {
  Mask lumen;
  Mask outer;
  Mask wall;
  CanonicalContour lumen_contour;
  CanonicalContour outer_contour;
};

/// Rasterizes one (slice, artery)'s lumen and outer contours and traces the
/// rasterized regions back to pixel boundaries. Throws ContainmentViolation
/// when lumen ⊄ outer.
RegionMasks region_masks(const Contour& lumen, const Contour& outer, int width, int height);

SliceMetrics slice_metrics(const RegionMasks& pred, const RegionMasks& gt);

/// Matches per (slice, artery); a pair is matched iff both sets carry a lumen
/// and an outer contour for it. Throws MismatchError on differing volume ids.
MetricsReport evaluate(const AnnotationSet& pred, const AnnotationSet& gt, int width, int height,
                       const ScoreWeights& weights = {}, int jobs = 1);

std::string report_to_json(const MetricsReport& r);
std::string report_to_csv(const MetricsReport& r);

}  // namespace vwseg
