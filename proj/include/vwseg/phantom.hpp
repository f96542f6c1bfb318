#pragma once

#include <cstdint>

#include "vwseg/annotation_io.hpp"

namespace vwseg {

/// Synthetic black-blood slices: per side an internal and an external
/// carotid, each a dark elliptical lumen inside a bright wall ring.
struct PhantomSpec {
  int n_slices = 4;
  int image_size = 720;
  /// Maximum centre offset (px) from each vessel's nominal position.
  double jitter = 1.5;
  double lumen_radius_min = 3.0;
  double lumen_radius_max = 5.0;
  double wall_min = 2.0;
  double wall_max = 3.0;
  /// Standard deviation of additive Gaussian noise.
  double noise = 20.0;
  double background_level = 400.0;
  double wall_level = 900.0;
  double lumen_level = 100.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid ranges or vessels that would leave their
  /// image quadrant.
  void validate() const;
};

struct Phantom {
  Volume volume;
  AnnotationSet annotations;
};

/// Nominal centre of an artery as fractions of the image size: internal
/// carotids low (y = 0.75), external high (y = 0.25); left at x = 0.25,
/// right at x = 0.75.
std::array<double, 2> nominal_centre(Artery a, int image_size);

Phantom phantom_generate(const PhantomSpec& spec, const std::string& volume_id = "phantom");

}  // namespace vwseg
