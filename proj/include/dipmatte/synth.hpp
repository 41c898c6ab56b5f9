#pragma once

#include "dipmatte/trimap.hpp"

#include <cstdint>
#include <string>

namespace dipmatte {

enum class ShapeKind { disk, strands, holed_ring };

std::string to_string(ShapeKind kind);
ShapeKind parse_shape_kind(const std::string& name);

/// Image with exact ground truth, built by compositing gt_fg over gt_bg with
/// gt_alpha. Alpha is the 4x4-supersampled coverage of the shape.
struct SyntheticCase {
    Tensor<float> image;    // 3 x H x W
    Tensor<float> gt_alpha; // 1 x H x W
    Tensor<float> gt_fg;    // 3 x H x W
    Tensor<float> gt_bg;    // 3 x H x W
    TrimapMasks trimap;
    /// Interior hole of a holed_ring (all unknown in the trimap); empty otherwise.
    PixelMask hole;
    std::uint64_t seed = 0;
    ShapeKind kind = ShapeKind::disk;
    int band_px = 0;
};

/// Trimap: F = erosion of {alpha > 0.999} and B = erosion of {alpha < 0.001},
/// both with a disk of radius band_px; everything else is unknown. For
/// holed_ring the whole hole is additionally forced to unknown.
SyntheticCase synth_case(ShapeKind kind, std::size_t height, std::size_t width, int band_px, std::uint64_t seed);

/// Radius of the disk drawn by synth_case for a given image size.
double synth_disk_radius(std::size_t height, std::size_t width);

/// Writes image.png, trimap.png, gt_alpha.png (16 bit), gt_fg.png, gt_bg.png and meta.txt.
void write_case(const std::string& dir, const SyntheticCase& c);

} // namespace dipmatte
