#include "vwseg/roi_prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vwseg {

std::string_view to_string(Side s) { return s == Side::Left ? "left" : "right"; }

Side parse_side(std::string_view s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw Error(ErrorCode::ParseError, "unknown side '" + std::string(s) + "'");
}

Side side_of(Artery a) {
  return (a == Artery::ICAL || a == Artery::ECAL) ? Side::Left : Side::Right;
}

RoiBox clamp_to_image(RoiBox box, int image_width, int image_height) {
  if (image_width < box.size || image_height < box.size) {
    throw Error(ErrorCode::ImageTooSmall, "image " + std::to_string(image_width) + "x" +
                                              std::to_string(image_height) +
                                              " cannot hold a " + std::to_string(box.size) +
                                              " px box");
  }
  box.x0 = std::clamp(box.x0, 0, image_width - box.size);
  box.y0 = std::clamp(box.y0, 0, image_height - box.size);
  return box;
}

RoiFit fit_roi(std::span<const Contour> contours, Side side, int image_width, int image_height,
               int size) {
  if (size < 1) throw Error(ErrorCode::ConfigError, "box size must be positive");
  if (image_width < size || image_height < size) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the roi box");
  }
  long xmin = std::numeric_limits<long>::max(), ymin = xmin;
  long xmax = std::numeric_limits<long>::min(), ymax = xmax;
  bool any = false;
  for (const auto& c : contours) {
    for (const auto& p : c.points) {
      const long x = static_cast<long>(std::floor(p.x + 0.5));
      const long y = static_cast<long>(std::floor(p.y + 0.5));
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::NoAnnotations, "no contour points for this side");

  // Centre rounds half up, so a span of exactly `size` pixels still fits in
  // [centre - size/2, centre + size/2 - 1].
  auto centre = [](long lo, long hi) {
    const long sum = lo + hi;
    return sum >= 0 ? (sum + 1) / 2 : -((-sum) / 2);
  };
  RoiFit fit;
  fit.box.size = size;
  fit.box.side = side;
  fit.box.x0 = static_cast<int>(centre(xmin, xmax) - size / 2);
  fit.box.y0 = static_cast<int>(centre(ymin, ymax) - size / 2);
  fit.box = clamp_to_image(fit.box, image_width, image_height);
  fit.span_exceeded = (xmax - xmin + 1 > size) || (ymax - ymin + 1 > size);
  return fit;
}

namespace {

void check_in_patch(const Point& p, int size) {
  if (!(p.x >= 0 && p.y >= 0 && p.x < size && p.y < size)) {
    throw Error(ErrorCode::PointOutOfPatch, "point outside roi patch");
  }
}

}  // namespace

Contour to_global(const Contour& c, const RoiBox& box) {
  Contour out = c;
  for (auto& p : out.points) {
    check_in_patch(p, box.size);
    if (box.flipped) p.x = (box.size - 1) - p.x;
    p.x += box.x0;
    p.y += box.y0;
  }
  return out;
}

Contour to_local(const Contour& c, const RoiBox& box) {
  Contour out = c;
  for (auto& p : out.points) {
    p.x -= box.x0;
    p.y -= box.y0;
    check_in_patch(p, box.size);
    if (box.flipped) p.x = (box.size - 1) - p.x;
  }
  return out;
}

FlipResult augment_flip(const Patch& patch, const std::vector<Mask>& masks, std::mt19937_64& rng) {
  for (const auto& m : masks) {
    if (m.width != patch.width || m.height != patch.height) {
      throw Error(ErrorCode::ShapeError, "mask and patch shapes differ");
    }
  }
  FlipResult r;
  r.flipped = (rng() >> 63) != 0;
  if (!r.flipped) {
    r.patch = patch;
    r.masks = masks;
    return r;
  }
  r.patch = mirror_x(patch);
  r.masks.reserve(masks.size());
  for (const auto& m : masks) r.masks.push_back(mirror_x(m));
  return r;
}

}  // namespace vwseg
