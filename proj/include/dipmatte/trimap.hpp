#pragma once

#include "dipmatte/tensor.hpp"

#include <cstdint>
#include <span>

namespace dipmatte {

enum class TrimapLabel : std::uint8_t { background = 0, unknown = 1, foreground = 2 };

/// Region masks derived from a trimap: F, B, U and C = F u B, plus the alpha
/// target T (1 on F, 0 on B; zero-filled and never read on U).
struct TrimapMasks {
    std::size_t height = 0;
    std::size_t width = 0;
    PixelMask fg;
    PixelMask bg;
    PixelMask unknown;
    PixelMask constrained;
    std::vector<float> target;

    static TrimapMasks from_labels(std::size_t height, std::size_t width, std::span<const TrimapLabel> labels);

    TrimapLabel label(std::size_t y, std::size_t x) const;
    /// Target alpha as a 1 x H x W constant tensor.
    template <typename T>
    Tensor<T> target_tensor() const;
};

} // namespace dipmatte
