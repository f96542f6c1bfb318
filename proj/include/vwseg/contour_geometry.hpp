#pragma once

#include <span>
#include <vector>

#include "vwseg/annotation_io.hpp"
#include "vwseg/grid.hpp"

namespace vwseg {

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
  auto operator<=>(const Pixel&) const = default;
};

/// Boundary pixels of one region as produced by mask_to_contour: integer,
/// consecutive points 8-adjacent, clockwise (y down), starting at the
/// topmost-then-leftmost pixel. May hold fewer than 3 points for tiny
/// regions (one pixel, or a two-pixel run).
struct CanonicalContour {
  std::vector<Pixel> points;
  bool operator==(const CanonicalContour&) const = default;

  bool degenerate() const { return points.size() < 3; }
};

/// Rounds each coordinate half-up (toward +inf) and collapses consecutive
/// duplicates, including the wrap from last to first point.
/// Throws DegenerateContour when fewer than 3 distinct points remain.
Contour snap_to_grid(const Contour& c);

/// Boundary-inclusive even-odd fill of pixel centres. Snaps `c` first.
Mask contour_to_mask(const Contour& c, int width, int height);
Mask contour_to_mask(const CanonicalContour& c, int width, int height);

/// Rasterizes an integer polygon (implicitly closed). Any vertex count >= 1.
Mask polygon_to_mask(std::span<const Pixel> polygon, int width, int height);

/// Moore-neighbour trace of the outer boundary of the largest 8-connected
/// component. Throws EmptyMask when nothing is set.
CanonicalContour mask_to_contour(const Mask& m);

/// outer AND NOT lumen. Throws ContainmentViolation when lumen leaks out of
/// outer and ShapeError on a dimension mismatch.
Mask ring_mask(const Mask& outer, const Mask& lumen);

Contour to_contour(const CanonicalContour& c, Artery artery, Boundary boundary, int slice);
/// Integer vertices of an already snapped contour.
std::vector<Pixel> to_pixels(const Contour& snapped);

// Connectivity helpers shared by the model and metric code.

/// 8-connected components in raster order of their first pixel.
std::vector<std::vector<Pixel>> components8(const Mask& m);

/// Keeps the largest 8-connected component; earliest in raster order wins
/// ties. An empty mask stays empty.
Mask largest_component(const Mask& m);

/// The 8-connected component of `m` that contains `seed`; empty if the seed
/// pixel is not set.
Mask component_containing(const Mask& m, Pixel seed);

/// Sets every background pixel that is not 4-connected to the image border.
Mask fill_holes(const Mask& m);

Mask mask_union(const Mask& a, const Mask& b);

}  // namespace vwseg
