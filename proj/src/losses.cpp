#include "dipmatte/losses.hpp"

#include "dipmatte/ops.hpp"

namespace dipmatte {
namespace {

template <typename T>
void require_image(const Tensor<T>& t, const TrimapMasks& masks, std::size_t channels, const char* what) {
    if (t.ndim() != 3 || t.dim(0) != channels || t.dim(1) != masks.height || t.dim(2) != masks.width)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) + "x" +
                         std::to_string(masks.height) + "x" + std::to_string(masks.width) + ", got " +
                         shape_str(t.shape()));
}

template <typename T>
Tensor<T> masked_squared_error(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, const PixelMask& region) {
    return ops::region_mean(tape, ops::square(tape, ops::sub(tape, a, b)), region);
}

} // namespace

template <typename T>
LossBreakdown LossTerms<T>::values() const {
    LossBreakdown b;
    b.image = image.item();
    b.alpha = alpha.item();
    b.fg = fg.item();
    b.bg = bg.item();
    b.composite = composite.item();
    b.exclusion = exclusion.item();
    b.total = total.item();
    return b;
}

template <typename T>
Tensor<T> loss_reconstruction(Tape<T>& tape, const Tensor<T>& predicted, const Tensor<T>& image) {
    if (predicted.shape() != image.shape())
        throw ShapeError("loss_reconstruction: " + shape_str(predicted.shape()) + " vs " + shape_str(image.shape()));
    const PixelMask all(image.dim(1), image.dim(2), true);
    return masked_squared_error(tape, predicted, image, all);
}

template <typename T>
Tensor<T> loss_alpha(Tape<T>& tape, const Tensor<T>& alpha, const TrimapMasks& masks) {
    require_image(alpha, masks, 1, "loss_alpha");
    if (masks.constrained.count() == 0) throw ConfigError("loss_alpha: trimap has no constrained pixels");
    return masked_squared_error(tape, alpha, masks.target_tensor<T>(), masks.constrained);
}

template <typename T>
Tensor<T> loss_fg(Tape<T>& tape, const Tensor<T>& fg, const Tensor<T>& image, const TrimapMasks& masks) {
    require_image(fg, masks, 3, "loss_fg");
    require_image(image, masks, 3, "loss_fg");
    if (masks.fg.count() == 0) return Tensor<T>::scalar(T(0));
    return masked_squared_error(tape, fg, image, masks.fg);
}

template <typename T>
Tensor<T> loss_bg(Tape<T>& tape, const Tensor<T>& bg, const Tensor<T>& image, const TrimapMasks& masks) {
    require_image(bg, masks, 3, "loss_bg");
    require_image(image, masks, 3, "loss_bg");
    if (masks.bg.count() == 0) return Tensor<T>::scalar(T(0));
    return masked_squared_error(tape, bg, image, masks.bg);
}

template <typename T>
Tensor<T> loss_composite(Tape<T>& tape, const Tensor<T>& alpha, const Tensor<T>& fg, const Tensor<T>& bg,
                         const Tensor<T>& image, const TrimapMasks& masks) {
    require_image(alpha, masks, 1, "loss_composite");
    require_image(fg, masks, 3, "loss_composite");
    require_image(bg, masks, 3, "loss_composite");
    require_image(image, masks, 3, "loss_composite");
    if (masks.unknown.count() == 0) return Tensor<T>::scalar(T(0));
    const auto a3 = ops::expand_channels(tape, alpha, 3);
    const auto inv3 = ops::add_scalar(tape, ops::scalar_mul(tape, a3, T(-1)), T(1));
    const auto recomposed = ops::add(tape, ops::mul(tape, a3, fg), ops::mul(tape, inv3, bg));
    return masked_squared_error(tape, image, recomposed, masks.unknown);
}

template <typename T>
Tensor<T> loss_exclusion(Tape<T>& tape, const Tensor<T>& alpha, const Tensor<T>& fg, const Tensor<T>& bg,
                         const TrimapMasks& masks) {
    require_image(alpha, masks, 1, "loss_exclusion");
    require_image(fg, masks, 3, "loss_exclusion");
    require_image(bg, masks, 3, "loss_exclusion");
    if (masks.unknown.count() == 0) return Tensor<T>::scalar(T(0));
    const auto grad_fg = ops::spatial_grad_l1(tape, fg);
    const auto grad_bg = ops::spatial_grad_l1(tape, bg);
    const auto grad_alpha = ops::spatial_grad_l1(tape, alpha);
    const auto products = ops::add(tape, ops::mul(tape, grad_fg, grad_bg), ops::mul(tape, grad_alpha, grad_bg));
    return ops::region_mean(tape, products, masks.unknown);
}

template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, const MattingOutputs<T>& out, const Tensor<T>& image,
                        const TrimapMasks& masks) {
    LossTerms<T> terms;
    terms.image = loss_reconstruction(tape, out.image, image);
    terms.alpha = loss_alpha(tape, out.alpha, masks);
    terms.fg = loss_fg(tape, out.fg, image, masks);
    terms.bg = loss_bg(tape, out.bg, image, masks);
    terms.composite = loss_composite(tape, out.alpha, out.fg, out.bg, image, masks);
    terms.exclusion = loss_exclusion(tape, out.alpha, out.fg, out.bg, masks);
    auto total = ops::add(tape, terms.image, terms.alpha);
    total = ops::add(tape, total, terms.fg);
    total = ops::add(tape, total, terms.bg);
    total = ops::add(tape, total, terms.composite);
    terms.total = ops::add(tape, total, terms.exclusion);
    return terms;
}

#define DIPMATTE_INSTANTIATE_LOSSES(T)                                                                          \
    template struct LossTerms<T>;                                                                              \
    template Tensor<T> loss_reconstruction(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> loss_alpha(Tape<T>&, const Tensor<T>&, const TrimapMasks&);                             \
    template Tensor<T> loss_fg(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const TrimapMasks&);              \
    template Tensor<T> loss_bg(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const TrimapMasks&);              \
    template Tensor<T> loss_composite(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                      const Tensor<T>&, const TrimapMasks&);                                   \
    template Tensor<T> loss_exclusion(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                      const TrimapMasks&);                                                     \
    template LossTerms<T> total_loss(Tape<T>&, const MattingOutputs<T>&, const Tensor<T>&, const TrimapMasks&);

DIPMATTE_INSTANTIATE_LOSSES(float)
DIPMATTE_INSTANTIATE_LOSSES(double)

} // namespace dipmatte
