#pragma once

#include <filesystem>

#include "vwseg/grid.hpp"

namespace vwseg {

/// Binary (P5) 8-bit PGM; set pixels are written as 255.
void write_pgm_mask(const Mask& m, const std::filesystem::path& path);

/// Reads a P5 PGM with maxval <= 255; any nonzero pixel becomes set.
Mask read_pgm_mask(const std::filesystem::path& path);

}  // namespace vwseg
