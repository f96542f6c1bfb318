#include "vwseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vwseg/contour_geometry.hpp"
#include "vwseg/roi_prior.hpp"

namespace vwseg {

void PhantomSpec::validate() const {
  if (n_slices < 1 || image_size < 8) {
    throw Error(ErrorCode::ConfigError, "phantom needs at least one slice and 8 px images");
  }
  if (!(lumen_radius_min > 0.0) || lumen_radius_max < lumen_radius_min) {
    throw Error(ErrorCode::ConfigError, "lumen radius range must be positive and ordered");
  }
  if (!(wall_min > 0.0) || wall_max < wall_min) {
    throw Error(ErrorCode::ConfigError, "wall thickness range must be positive and ordered");
  }
  if (!(jitter >= 0.0) || !(noise >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "jitter and noise must be non-negative");
  }
  // Every vessel stays inside its own quadrant, so the four never touch.
  if (jitter + lumen_radius_max + wall_max + 1.0 >= image_size / 4.0) {
    throw Error(ErrorCode::ConfigError, "vessels do not fit in a " + std::to_string(image_size) +
                                            " px image");
  }
  for (double v : {background_level, wall_level, lumen_level}) {
    if (!(v >= 0.0) || v > 65535.0) {
      throw Error(ErrorCode::ConfigError, "intensity levels must lie in the u16 range");
    }
  }
}

std::array<double, 2> nominal_centre(Artery a, int image_size) {
  const double x = side_of(a) == Side::Left ? 0.25 : 0.75;
  const double y = (a == Artery::ICAL || a == Artery::ICAR) ? 0.75 : 0.25;
  return {x * image_size, y * image_size};
}

namespace {

Mask ellipse(int size, double cx, double cy, double rx, double ry) {
  Mask m(size, size);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + rx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + ry)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double u = (x - cx) / rx, v = (y - cy) / ry;
      if (u * u + v * v <= 1.0) m.at(x, y) = 1;
    }
  }
  return m;
}

}  // namespace

Phantom phantom_generate(const PhantomSpec& spec, const std::string& volume_id) {
  spec.validate();
  const int n = spec.image_size;
  Phantom ph{Volume({n, n, spec.n_slices}, {1.0, 1.0, 1.0}), AnnotationSet(volume_id)};
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> radius(spec.lumen_radius_min, spec.lumen_radius_max);
  std::uniform_real_distribution<double> wall(spec.wall_min, spec.wall_max);
  std::normal_distribution<double> noise(0.0, 1.0);

  for (int z = 0; z < spec.n_slices; ++z) {
    std::vector<double> level(static_cast<std::size_t>(n) * n, spec.background_level);
    for (Artery a : kAllArteries) {
      const auto c = nominal_centre(a, n);
      const double cx = c[0] + spec.jitter * unit(rng), cy = c[1] + spec.jitter * unit(rng);
      const double rx = radius(rng), ry = radius(rng);
      const double t = wall(rng);
      const CanonicalContour lumen = mask_to_contour(ellipse(n, cx, cy, rx, ry));
      const CanonicalContour outer = mask_to_contour(ellipse(n, cx, cy, rx + t, ry + t));
      ph.annotations.add(to_contour(lumen, a, Boundary::Lumen, z));
      ph.annotations.add(to_contour(outer, a, Boundary::Outer, z));
      // Intensities follow the regions the annotations describe.
      const Mask lm = contour_to_mask(lumen, n, n), om = contour_to_mask(outer, n, n);
      for (std::size_t i = 0; i < level.size(); ++i) {
        if (lm.data[i]) level[i] = spec.lumen_level;
        else if (om.data[i]) level[i] = spec.wall_level;
      }
    }
    Slice s(n, n);
    for (std::size_t i = 0; i < level.size(); ++i) {
      const double v = level[i] + (spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0);
      s.data[i] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    }
    ph.volume.set_slice(z, s);
  }
  return ph;
}

}  // namespace vwseg
