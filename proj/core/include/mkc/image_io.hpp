#pragma once

#include <string>

#include "mkc/tensor.hpp"

namespace mkc {

// Reads an 8-bit PNG (RGB, RGBA, gray or palette; alpha is dropped, gray is
// replicated) or a binary PPM (P6, maxval 255) into [H, W, 3] with values
// v / 255. Throws DataError naming the file on anything else, including
// 16-bit images.
Tensor load_image(const std::string& path);

// Writes [H, W, 3] values in [0, 1] as 8-bit samples round(v * 255); the
// format follows the extension (.png or .ppm).
void save_image(const Tensor& image, const std::string& path);

// Rounds to the 8-bit grid: round(clamp(v) * 255) / 255.
Tensor quantize_8bit(const Tensor& image);

}  // namespace mkc
