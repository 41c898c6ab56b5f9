#pragma once

#include "dipmatte/tensor.hpp"

#include <array>
#include <string_view>

namespace dipmatte::ops {

// Differentiable operations. Every op records its adjoint on the tape when any
// input requires grad and the tape is recording; otherwise the result is a
// plain constant. Shapes must match exactly: the only broadcast is
// tensor-with-scalar (scalar_mul, add_scalar) plus the explicit expand_channels.

/// Convolution with reflect padding of k/2 on each side. k must be odd and
/// stride 1 or 2; stride 2 yields ceil(H/2) x ceil(W/2).
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, int stride);

/// Adds a per-channel bias [C] to a C x H x W tensor.
template <typename T>
Tensor<T> bias_add(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& bias);

template <typename T>
Tensor<T> upsample_nearest(Tape<T>& tape, const Tensor<T>& input, int factor = 2);

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& input, T slope);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input);

/// Per-channel normalization over H x W with biased variance, no affine terms.
template <typename T>
Tensor<T> instance_norm(Tape<T>& tape, const Tensor<T>& input, T eps = T(1e-5));

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scalar_mul(Tape<T>& tape, const Tensor<T>& a, T s);
template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, T s);
template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a);
template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& a);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Repeats a 1 x H x W plane into C identical channels.
template <typename T>
Tensor<T> expand_channels(Tape<T>& tape, const Tensor<T>& plane, std::size_t channels);

/// Keeps the top-left height x width window of a C x H x W tensor.
template <typename T>
Tensor<T> crop(Tape<T>& tape, const Tensor<T>& input, std::size_t height, std::size_t width);

/// Per pixel, sum over channels of |forward difference in x| + |forward
/// difference in y|; the last column/row use a zero difference. Output 1 x H x W.
template <typename T>
Tensor<T> spatial_grad_l1(Tape<T>& tape, const Tensor<T>& input);

/// Sum of all elements, as a scalar.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

/// (1/|mask|) * sum over masked pixels and all channels. Empty mask is an error.
template <typename T>
Tensor<T> region_mean(Tape<T>& tape, const Tensor<T>& a, const PixelMask& mask);

/// Names of every differentiable operation above, in declaration order.
inline constexpr std::array<std::string_view, 19> kDifferentiableOps = {
    "conv2d",        "bias_add",   "upsample_nearest", "leaky_relu", "sigmoid",
    "instance_norm", "add",        "sub",              "mul",        "scalar_mul",
    "add_scalar",    "abs",        "square",           "concat_channels",
    "expand_channels", "crop",     "spatial_grad_l1",  "sum",        "region_mean",
};

} // namespace dipmatte::ops
