#pragma once

#include "dipmatte/trimap.hpp"

#include <cstdint>
#include <string>

namespace dipmatte {

/// 8- or 16-bit RGB(A) raster as a 3 x H x W tensor in [0, 1]; alpha is dropped.
Tensor<float> load_image(const std::string& path);
/// Writes 8-bit RGB, values clamped to [0, 1] and rounded.
void save_image(const std::string& path, const Tensor<float>& image);

/// Gray value bands: < 64 background, > 191 foreground, otherwise unknown.
TrimapLabel trimap_label(std::uint8_t gray);
TrimapMasks load_trimap(const std::string& path);
/// Writes 0 / 128 / 255 for background / unknown / foreground.
void save_trimap(const std::string& path, const TrimapMasks& masks);

/// 16-bit grayscale so fractional alpha survives (step 1/65535).
void save_alpha(const std::string& path, const Tensor<float>& alpha);
/// Reads an 8- or 16-bit grayscale plane as 1 x H x W in [0, 1].
Tensor<float> load_alpha(const std::string& path);

} // namespace dipmatte
