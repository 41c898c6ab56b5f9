#include "dipmatte/trimap.hpp"

namespace dipmatte {

TrimapMasks TrimapMasks::from_labels(std::size_t height, std::size_t width, std::span<const TrimapLabel> labels) {
    if (labels.size() != height * width)
        throw ShapeError("trimap: " + std::to_string(labels.size()) + " labels for a " + std::to_string(height) +
                         "x" + std::to_string(width) + " image");
    TrimapMasks m;
    m.height = height;
    m.width = width;
    m.fg = PixelMask(height, width);
    m.bg = PixelMask(height, width);
    m.unknown = PixelMask(height, width);
    m.constrained = PixelMask(height, width);
    m.target.assign(height * width, 0.0f);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        switch (labels[i]) {
        case TrimapLabel::foreground:
            m.fg.bits[i] = 1;
            m.constrained.bits[i] = 1;
            m.target[i] = 1.0f;
            break;
        case TrimapLabel::background:
            m.bg.bits[i] = 1;
            m.constrained.bits[i] = 1;
            break;
        case TrimapLabel::unknown:
            m.unknown.bits[i] = 1;
            break;
        }
    }
    return m;
}

TrimapLabel TrimapMasks::label(std::size_t y, std::size_t x) const {
    if (fg(y, x)) return TrimapLabel::foreground;
    if (bg(y, x)) return TrimapLabel::background;
    return TrimapLabel::unknown;
}

template <typename T>
Tensor<T> TrimapMasks::target_tensor() const {
    return Tensor<T>(Shape{1, height, width}, std::vector<T>(target.begin(), target.end()));
}

template Tensor<float> TrimapMasks::target_tensor<float>() const;
template Tensor<double> TrimapMasks::target_tensor<double>() const;

} // namespace dipmatte
