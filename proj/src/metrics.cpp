#include "vwseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "vwseg/parallel.hpp"

namespace vwseg {

namespace {

void require_same_dims(const Mask& a, const Mask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::ShapeError, std::string(what) + ": mask dimensions differ");
  }
}

std::size_t count_and(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a.data[i] != 0) & (b.data[i] != 0);
  return n;
}

}  // namespace

double dice(const Mask& a, const Mask& b) {
  require_same_dims(a, b, "dice");
  const std::size_t na = count_set(a), nb = count_set(b);
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(count_and(a, b)) / static_cast<double>(na + nb);
}

double area_diff(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "area_diff");
  const double g = static_cast<double>(count_set(gt));
  if (g == 0.0) throw Error(ErrorCode::EmptyGroundTruth, "area_diff: ground truth is empty");
  return std::abs(static_cast<double>(count_set(pred)) - g) / g;
}

double nwi(const Mask& lumen, const Mask& outer) {
  require_same_dims(lumen, outer, "nwi");
  const std::size_t o = count_set(outer);
  if (o == 0) throw Error(ErrorCode::EmptyGroundTruth, "nwi: outer region is empty");
  const std::size_t l = count_set(lumen);
  if (count_and(lumen, outer) != l) {
    throw Error(ErrorCode::ContainmentViolation, "nwi: lumen extends outside the outer wall");
  }
  return static_cast<double>(o - l) / static_cast<double>(o);
}

double nwi_diff(const Mask& pred_lumen, const Mask& pred_outer, const Mask& gt_lumen,
                const Mask& gt_outer) {
  return std::abs(nwi(pred_lumen, pred_outer) - nwi(gt_lumen, gt_outer));
}

namespace {

double directed(const CanonicalContour& a, const CanonicalContour& b) {
  double worst = 0.0;
  for (const Pixel& p : a.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Pixel& q : b.points) {
      const double dx = p.x - q.x, dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
      if (best <= worst) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

double hausdorff(const CanonicalContour& a, const CanonicalContour& b) {
  if (a.points.empty() || b.points.empty()) {
    throw Error(ErrorCode::EmptyContour, "hausdorff: contour has no points");
  }
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

double hausdorff_norm(const CanonicalContour& pred, const CanonicalContour& gt, double gt_area) {
  const double h = hausdorff(pred, gt);
  if (!(gt_area > 0.0)) throw Error(ErrorCode::EmptyGroundTruth, "hausdorff: ground truth area is zero");
  return h / std::sqrt(gt_area / std::numbers::pi);
}

std::array<double, 7> metric_values(const SliceMetrics& m) {
  return {m.dice_lumen,  m.dice_wall,     m.lumen_area_diff, m.wall_area_diff,
          m.nwi_diff,    m.hd_lumen_norm, m.hd_wall_norm};
}

RegionMasks region_masks(const Contour& lumen, const Contour& outer, int width, int height) {
  RegionMasks r;
  r.lumen = contour_to_mask(lumen, width, height);
  r.outer = contour_to_mask(outer, width, height);
  r.wall = ring_mask(r.outer, r.lumen);
  if (count_set(r.lumen) > 0) r.lumen_contour = mask_to_contour(r.lumen);
  if (count_set(r.outer) > 0) r.outer_contour = mask_to_contour(r.outer);
  return r;
}

SliceMetrics slice_metrics(const RegionMasks& pred, const RegionMasks& gt) {
  SliceMetrics m;
  m.dice_lumen = dice(pred.lumen, gt.lumen);
  m.dice_wall = dice(pred.wall, gt.wall);
  m.lumen_area_diff = area_diff(pred.lumen, gt.lumen);
  m.wall_area_diff = area_diff(pred.wall, gt.wall);
  m.nwi_diff = nwi_diff(pred.lumen, pred.outer, gt.lumen, gt.outer);
  m.hd_lumen_norm = hausdorff_norm(pred.lumen_contour, gt.lumen_contour,
                                   static_cast<double>(count_set(gt.lumen)));
  m.hd_wall_norm = hausdorff_norm(pred.outer_contour, gt.outer_contour,
                                  static_cast<double>(count_set(gt.outer)));
  return m;
}

MetricsReport evaluate(const AnnotationSet& pred, const AnnotationSet& gt, int width, int height,
                       const ScoreWeights& weights, int jobs) {
  if (pred.volume_id() != gt.volume_id()) {
    throw Error(ErrorCode::MismatchError, "prediction volume '" + pred.volume_id() +
                                              "' differs from ground truth '" + gt.volume_id() + "'");
  }
  if (!(weights.dice_lumen >= 0.0) || !(weights.dice_wall >= 0.0) ||
      weights.dice_lumen + weights.dice_wall <= 0.0) {
    throw Error(ErrorCode::ConfigError, "score weights must be non-negative and not both zero");
  }
  // Keys with both boundaries present.
  auto complete = [](const AnnotationSet& s) {
    std::set<std::pair<int, Artery>> keys;
    for (const auto& c : s.entries()) {
      if (s.find(c.slice_index, c.artery, Boundary::Lumen) &&
          s.find(c.slice_index, c.artery, Boundary::Outer)) {
        keys.emplace(c.slice_index, c.artery);
      }
    }
    return keys;
  };
  const auto kg = complete(gt), kp = complete(pred);
  std::set<std::pair<int, Artery>> all(kg.begin(), kg.end());
  all.insert(kp.begin(), kp.end());

  MetricsReport r;
  r.volume_id = gt.volume_id();
  for (const auto& [slice, artery] : all) {
    SliceEval e;
    e.slice_index = slice;
    e.artery = artery;
    e.has_gt = kg.count({slice, artery}) > 0;
    e.has_pred = kp.count({slice, artery}) > 0;
    r.slices.push_back(e);
  }
  parallel_for(r.slices.size(), jobs, [&](std::size_t i) {
    SliceEval& e = r.slices[i];
    if (!e.has_gt || !e.has_pred) return;
    auto masks = [&](const AnnotationSet& s) {
      return region_masks(*s.find(e.slice_index, e.artery, Boundary::Lumen),
                          *s.find(e.slice_index, e.artery, Boundary::Outer), width, height);
    };
    e.metrics = slice_metrics(masks(pred), masks(gt));
  });

  r.gt_count = kg.size();
  for (const auto& e : r.slices) {
    if (e.matched()) ++r.matched_count;
    else ++r.unmatched_count;
  }
  if (r.matched_count == 0) return r;

  std::array<Aggregate, 7> agg{};
  double score_sum = 0.0;
  const double wsum = weights.dice_lumen + weights.dice_wall;
  for (const auto& e : r.slices) {
    if (!e.matched()) continue;
    const auto v = metric_values(*e.metrics);
    for (std::size_t k = 0; k < v.size(); ++k) agg[k].mean += v[k];
    score_sum += (weights.dice_lumen * e.metrics->dice_lumen +
                  weights.dice_wall * e.metrics->dice_wall) / wsum;
  }
  const double n = static_cast<double>(r.matched_count);
  for (auto& a : agg) a.mean /= n;
  for (const auto& e : r.slices) {
    if (!e.matched()) continue;
    const auto v = metric_values(*e.metrics);
    for (std::size_t k = 0; k < v.size(); ++k) agg[k].std += (v[k] - agg[k].mean) * (v[k] - agg[k].mean);
  }
  for (auto& a : agg) a.std = std::sqrt(a.std / n);
  r.aggregates = agg;
  r.quantitative_score = (n / static_cast<double>(r.gt_count)) * (score_sum / n);
  return r;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (static_cast<unsigned char>(c) < 0x20) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\u%04x", c);
      out += buf;
      continue;
    }
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  std::ostringstream o;
  o << "{\n  \"volume_id\": " << quoted(r.volume_id) << ",\n"
    << "  \"gt_count\": " << r.gt_count << ",\n"
    << "  \"matched_count\": " << r.matched_count << ",\n"
    << "  \"unmatched_count\": " << r.unmatched_count << ",\n"
    << "  \"quantitative_score\": " << fixed6(r.quantitative_score) << ",\n"
    << "  \"aggregates\": ";
  if (!r.aggregates) {
    o << "null";
  } else {
    o << "{";
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      o << (k ? ",\n" : "\n") << "    \"" << kMetricNames[k] << "\": {\"mean\": "
        << fixed6((*r.aggregates)[k].mean) << ", \"std\": " << fixed6((*r.aggregates)[k].std) << "}";
    }
    o << "\n  }";
  }
  o << ",\n  \"slices\": [";
  for (std::size_t i = 0; i < r.slices.size(); ++i) {
    const auto& e = r.slices[i];
    o << (i ? ",\n" : "\n") << "    {\"slice\": " << e.slice_index << ", \"artery\": \""
      << to_string(e.artery) << "\", \"has_gt\": " << (e.has_gt ? "true" : "false")
      << ", \"has_pred\": " << (e.has_pred ? "true" : "false")
      << ", \"matched\": " << (e.matched() ? "true" : "false");
    if (e.matched()) {
      const auto v = metric_values(*e.metrics);
      for (std::size_t k = 0; k < v.size(); ++k) o << ", \"" << kMetricNames[k] << "\": " << fixed6(v[k]);
    }
    o << "}";
  }
  o << (r.slices.empty() ? "]\n}\n" : "\n  ]\n}\n");
  return o.str();
}

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream o;
  o << "slice,artery,matched";
  for (const char* n : kMetricNames) o << ',' << n;
  o << '\n';
  for (const auto& e : r.slices) {
    o << e.slice_index << ',' << to_string(e.artery) << ',' << (e.matched() ? 1 : 0);
    if (e.matched()) {
      for (double v : metric_values(*e.metrics)) o << ',' << fixed6(v);
    } else {
      for (std::size_t k = 0; k < kMetricNames.size(); ++k) o << ',';
    }
    o << '\n';
  }
  for (int row = 0; row < 2; ++row) {
    o << (row == 0 ? "mean" : "std") << ",all," << r.matched_count;
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      o << ',';
      if (r.aggregates) o << fixed6(row == 0 ? (*r.aggregates)[k].mean : (*r.aggregates)[k].std);
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace vwseg
