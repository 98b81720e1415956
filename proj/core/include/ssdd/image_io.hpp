#pragma once

#include <filesystem>

#include "ssdd/tensor.hpp"

namespace ssdd {

// Writes an NCHW batch as one tiled preview image in the portable pixel map
// family: P5 (grayscale) for single-channel data, P6 otherwise. Values are
// min-max scaled to 8 bits over the whole batch.
void write_preview_grid(const std::filesystem::path& path, const Tensor& images, int columns = 8);

}  // namespace ssdd
