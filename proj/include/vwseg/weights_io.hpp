#pragma once

#include <filesystem>
#include <span>

#include "vwseg/layers.hpp"

namespace vwseg::nn {

/// Writes parameters as little-endian float64 in layer order (kernel then
/// bias, then the four Adam moments when `with_adam`), plus a JSON manifest
/// listing names, shapes, offsets and Adam step counts.
void save_weights(std::span<const LayerParams* const> layers, const std::filesystem::path& bin,
                  const std::filesystem::path& manifest, bool with_adam);

/// Loads into already-built layers, matching by name and shape. Adam state is
/// restored when present in the file, cleared otherwise.
void load_weights(std::span<LayerParams* const> layers, const std::filesystem::path& bin,
                  const std::filesystem::path& manifest);

}  // namespace vwseg::nn
