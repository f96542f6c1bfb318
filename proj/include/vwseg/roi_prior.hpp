#pragma once

#include <random>
#include <span>
#include <vector>

#include "vwseg/annotation_io.hpp"
#include "vwseg/grid.hpp"

namespace vwseg {

inline constexpr int kRoiSize = 160;

enum class Side { Left, Right };

std::string_view to_string(Side s);
Side parse_side(std::string_view s);

/// Image-left arteries (ICAL, ECAL) belong to the left side.
Side side_of(Artery a);

/// Square crop window. `size` is 160 for full-size 720x720 slices; smaller
/// values exist only for phantom images narrower than two boxes.
struct RoiBox {
  int x0 = 0;
  int y0 = 0;
  int size = kRoiSize;
  Side side = Side::Left;
  bool flipped = false;

  bool operator==(const RoiBox&) const = default;
};

struct RoiFit {
  RoiBox box;
  /// The contour span was wider than the box in some axis, so not every
  /// point is covered.
  bool span_exceeded = false;
};

/// Smallest box around all points (snapped half-up), grown to `size` about
/// its centre and shifted back inside the image.
RoiFit fit_roi(std::span<const Contour> contours, Side side, int image_width, int image_height,
               int size = kRoiSize);

/// Shifts the box so it lies inside the image. Throws ImageTooSmall when the
/// image cannot hold it.
RoiBox clamp_to_image(RoiBox box, int image_width, int image_height);

template <class T>
Grid<T> crop(const Grid<T>& slice, const RoiBox& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x0 + box.size > slice.width ||
      box.y0 + box.size > slice.height) {
    throw Error(ErrorCode::BoxOutOfBounds, "roi box outside slice");
  }
  Grid<T> out(box.size, box.size);
  for (int y = 0; y < box.size; ++y) {
    for (int x = 0; x < box.size; ++x) {
      const int sx = box.flipped ? box.size - 1 - x : x;
      out.at(x, y) = slice.at(box.x0 + sx, box.y0 + y);
    }
  }
  return out;
}

/// Writes a crop back into a full-size grid (inverse of crop).
template <class T>
void paste(const Grid<T>& patch, const RoiBox& box, Grid<T>& slice) {
  if (patch.width != box.size || patch.height != box.size) {
    throw Error(ErrorCode::ShapeError, "patch does not match box");
  }
  if (box.x0 < 0 || box.y0 < 0 || box.x0 + box.size > slice.width ||
      box.y0 + box.size > slice.height) {
    throw Error(ErrorCode::BoxOutOfBounds, "roi box outside slice");
  }
  for (int y = 0; y < box.size; ++y) {
    for (int x = 0; x < box.size; ++x) {
      const int sx = box.flipped ? box.size - 1 - x : x;
      slice.at(box.x0 + sx, box.y0 + y) = patch.at(x, y);
    }
  }
}

Contour to_global(const Contour& c, const RoiBox& box);
Contour to_local(const Contour& c, const RoiBox& box);

template <class T>
Grid<T> mirror_x(const Grid<T>& g) {
  Grid<T> out(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) out.at(x, y) = g.at(g.width - 1 - x, y);
  }
  return out;
}

struct FlipResult {
  Patch patch;
  std::vector<Mask> masks;
  bool flipped = false;
};

/// Draws one bit from `rng`; when set, mirrors the patch and every mask.
FlipResult augment_flip(const Patch& patch, const std::vector<Mask>& masks, std::mt19937_64& rng);

}  // namespace vwseg
