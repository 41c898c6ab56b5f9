#pragma once

#include "dipmatte/trimap.hpp"

#include <array>
#include <string_view>

namespace dipmatte {

/// Scalar values of the six loss terms and their sum.
struct LossBreakdown {
    double image = 0;     // L_I
    double alpha = 0;     // L_alpha
    double fg = 0;        // L_F
    double bg = 0;        // L_B
    double composite = 0; // L_c
    double exclusion = 0; // L_e
    double total = 0;

    static constexpr std::array<std::string_view, 6> kTermNames = {"L_I", "L_alpha", "L_F", "L_B", "L_c", "L_e"};
    std::array<double, 6> terms() const { return {image, alpha, fg, bg, composite, exclusion}; }
};

template <typename T>
struct LossTerms {
    Tensor<T> image, alpha, fg, bg, composite, exclusion, total;

    LossBreakdown values() const;
};

/// Network heads the losses consume: Î and α̂ from the first network, F̂ and B̂
/// from the other two.
template <typename T>
struct MattingOutputs {
    Tensor<T> image; // 3 x H x W
    Tensor<T> alpha; // 1 x H x W
    Tensor<T> fg;    // 3 x H x W
    Tensor<T> bg;    // 3 x H x W
};

/// Mean over all pixels of the squared RGB distance.
template <typename T>
Tensor<T> loss_reconstruction(Tape<T>& tape, const Tensor<T>& predicted, const Tensor<T>& image);

/// Mean over C of (α̂ - T)^2. An empty C is a degenerate trimap and throws.
template <typename T>
Tensor<T> loss_alpha(Tape<T>& tape, const Tensor<T>& alpha, const TrimapMasks& masks);

/// Mean over F of the squared RGB distance; 0 when F is empty.
template <typename T>
Tensor<T> loss_fg(Tape<T>& tape, const Tensor<T>& fg, const Tensor<T>& image, const TrimapMasks& masks);

/// Mean over B of the squared RGB distance; 0 when B is empty.
template <typename T>
Tensor<T> loss_bg(Tape<T>& tape, const Tensor<T>& bg, const Tensor<T>& image, const TrimapMasks& masks);

/// Mean over U of |I - (α̂ F̂ + (1 - α̂) B̂)|^2; 0 when U is empty.
template <typename T>
Tensor<T> loss_composite(Tape<T>& tape, const Tensor<T>& alpha, const Tensor<T>& fg, const Tensor<T>& bg,
                         const Tensor<T>& image, const TrimapMasks& masks);

/// Mean over U of |∇F̂|_1 |∇B̂|_1 + |∇α̂|_1 |∇B̂|_1; 0 when U is empty.
template <typename T>
Tensor<T> loss_exclusion(Tape<T>& tape, const Tensor<T>& alpha, const Tensor<T>& fg, const Tensor<T>& bg,
                         const TrimapMasks& masks);

/// Unweighted sum of the six terms.
template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, const MattingOutputs<T>& outputs, const Tensor<T>& image,
                        const TrimapMasks& masks);

} // namespace dipmatte
