#pragma once

#include <filesystem>
#include <vector>

#include "cogan/tensor.hpp"

namespace cogan {

/// Tiles same-shape images row-major with 2-pixel white gutters and writes a
/// binary portable anymap: P5 for 1-channel images, P6 for 3-channel, maxval
/// 255, byte = round(255 * clamp(v, 0, 1)). Accepts [C,H,W] or [1,C,H,W]
/// tensors with C in {1,3}.
void emit_grid(const std::filesystem::path& path, const std::vector<Tensor>& images,
               std::size_t cols);

}  // namespace cogan
