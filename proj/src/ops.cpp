#include "dipmatte/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <utility>

namespace dipmatte::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool tracks(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
    if (!tape.recording()) return false;
    for (const auto* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

void require_chw(const Shape& s, const char* op) {
    if (s.size() != 3) throw ShapeError(std::string(op) + ": expected C x H x W, got " + shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

// Reflection without edge repeat: -1 -> 1, n -> n-2. A size-1 axis maps everything to 0.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

// Elementwise unary op with a pointwise derivative computed from (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& a, F f, D dfdx) {
    const auto x = a.data();
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const bool track = tracks(tape, {&a});
    Tensor<T> out(a.shape(), std::move(y), track);
    if (track) {
        tape.record([out, a, dfdx]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            const auto xv = a.data();
            const auto yv = out.data();
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
        });
    }
    return out;
}

} // namespace

// Patch geometry shared by the forward and adjoint passes. Work is split into
// strips of output rows so each im2col block stays cache resident.
struct ConvGeometry {
    std::size_t cin, h, w, cout, k, s, ho, wo, kk, np, strip_rows;
    std::vector<std::size_t> iy, ix; // source row/col per (output index, tap)
};

// Output columns [lo, hi) of tap kx read in-bounds source columns ox*s + kx - pad.
inline std::pair<std::size_t, std::size_t> interior(const ConvGeometry& g, std::size_t kx) {
    const std::size_t pad = g.k / 2;
    std::size_t lo = 0;
    while (lo < g.wo && lo * g.s + kx < pad) ++lo;
    std::size_t hi = lo;
    while (hi < g.wo && hi * g.s + kx - pad < g.w) ++hi;
    return {lo, hi};
}

template <typename T>
void im2col_strip(const ConvGeometry& g, const T* x, std::size_t oy0, std::size_t rows, T* cols) {
    const std::size_t n = rows * g.wo, pad = g.k / 2;
    for (std::size_t kx = 0; kx < g.k; ++kx) {
        const auto [lo, hi] = interior(g, kx);
        const std::size_t* cx = g.ix.data() + kx;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const T* plane = x + ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                T* row = cols + ((ci * g.k + ky) * g.k + kx) * n;
                for (std::size_t r = 0; r < rows; ++r) {
                    const T* src = plane + g.iy[(oy0 + r) * g.k + ky] * g.w;
                    T* dst = row + r * g.wo;
                    for (std::size_t ox = 0; ox < lo; ++ox) dst[ox] = src[cx[ox * g.k]];
                    const T* base = src + (lo * g.s + kx - pad);
                    if (g.s == 1)
                        for (std::size_t i = 0; i < hi - lo; ++i) dst[lo + i] = base[i];
                    else
                        for (std::size_t i = 0; i < hi - lo; ++i) dst[lo + i] = base[2 * i];
                    for (std::size_t ox = hi; ox < g.wo; ++ox) dst[ox] = src[cx[ox * g.k]];
                }
            }
        }
    }
}

template <typename T>
void col2im_strip(const ConvGeometry& g, const T* cols, std::size_t oy0, std::size_t rows, T* gx) {
    const std::size_t n = rows * g.wo, pad = g.k / 2;
    for (std::size_t kx = 0; kx < g.k; ++kx) {
        const auto [lo, hi] = interior(g, kx);
        const std::size_t* cx = g.ix.data() + kx;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            T* plane = gx + ci * g.h * g.w;
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                const T* row = cols + ((ci * g.k + ky) * g.k + kx) * n;
                for (std::size_t r = 0; r < rows; ++r) {
                    T* dst = plane + g.iy[(oy0 + r) * g.k + ky] * g.w;
                    const T* src = row + r * g.wo;
                    for (std::size_t ox = 0; ox < lo; ++ox) dst[cx[ox * g.k]] += src[ox];
                    T* base = dst + (lo * g.s + kx - pad);
                    if (g.s == 1)
                        for (std::size_t i = 0; i < hi - lo; ++i) base[i] += src[lo + i];
                    else
                        for (std::size_t i = 0; i < hi - lo; ++i) base[2 * i] += src[lo + i];
                    for (std::size_t ox = hi; ox < g.wo; ++ox) dst[cx[ox * g.k]] += src[ox];
                }
            }
        }
    }
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, int stride) {
    require_chw(input.shape(), "conv2d");
    if (kernel.ndim() != 4) throw ShapeError("conv2d: kernel must be Cout x Cin x k x k, got " + shape_str(kernel.shape()));
    auto geo = std::make_shared<ConvGeometry>();
    auto& g = *geo;
    g.cin = input.dim(0);
    g.h = input.dim(1);
    g.w = input.dim(2);
    g.cout = kernel.dim(0);
    g.k = kernel.dim(2);
    if (kernel.dim(1) != g.cin)
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                         std::to_string(g.cin));
    if (kernel.dim(3) != g.k || g.k % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size");
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");

    g.s = static_cast<std::size_t>(stride);
    g.ho = (g.h + g.s - 1) / g.s;
    g.wo = (g.w + g.s - 1) / g.s;
    g.kk = g.cin * g.k * g.k;
    g.np = g.ho * g.wo;
    constexpr std::size_t kStripElems = 1 << 16;
    // A 1x1 stride-1 conv reads the input planes directly as its column matrix.
    const bool pointwise = g.k == 1 && g.s == 1;
    g.strip_rows = pointwise ? g.ho : std::clamp<std::size_t>(kStripElems / (g.kk * g.wo), 1, g.ho);
    const auto pad = static_cast<std::ptrdiff_t>(g.k / 2);
    g.iy.resize(g.ho * g.k);
    g.ix.resize(g.wo * g.k);
    for (std::size_t o = 0; o < g.ho; ++o)
        for (std::size_t t = 0; t < g.k; ++t)
            g.iy[o * g.k + t] = reflect_index(static_cast<std::ptrdiff_t>(o * g.s + t) - pad, g.h);
    for (std::size_t o = 0; o < g.wo; ++o)
        for (std::size_t t = 0; t < g.k; ++t)
            g.ix[o * g.k + t] = reflect_index(static_cast<std::ptrdiff_t>(o * g.s + t) - pad, g.w);

    std::vector<T> y(g.cout * g.np);
    Eigen::Map<const RowMat<T>> wm(kernel.data().data(), g.cout, g.kk);
    Eigen::Map<RowMat<T>> ym(y.data(), g.cout, g.np);
    if (pointwise) ym.noalias() = wm * Eigen::Map<const RowMat<T>>(input.data().data(), g.kk, g.np);
    std::vector<T> cols(pointwise ? 0 : g.kk * g.strip_rows * g.wo);
    for (std::size_t oy = 0; !pointwise && oy < g.ho; oy += g.strip_rows) {
        const std::size_t rows = std::min(g.strip_rows, g.ho - oy), n = rows * g.wo;
        im2col_strip(g, input.data().data(), oy, rows, cols.data());
        Eigen::Map<const RowMat<T>> cm(cols.data(), g.kk, n);
        ym.middleCols(oy * g.wo, n).noalias() = wm * cm;
    }

    const bool track = tracks(tape, {&input, &kernel});
    Tensor<T> out(Shape{g.cout, g.ho, g.wo}, std::move(y), track);
    if (track) {
        tape.record([out, input, kernel, geo, pointwise]() mutable {
            if (!out.has_grad()) return;
            const auto& g = *geo;
            const bool dk = kernel.requires_grad(), dx = input.requires_grad();
            Eigen::Map<const RowMat<T>> gm(out.grad().data(), g.cout, g.np);
            Eigen::Map<const RowMat<T>> wm(kernel.data().data(), g.cout, g.kk);
            if (pointwise) {
                if (dk) {
                    Eigen::Map<RowMat<T>> gw(kernel.grad_buffer().data(), g.cout, g.kk);
                    gw.noalias() += gm * Eigen::Map<const RowMat<T>>(input.data().data(), g.kk, g.np).transpose();
                }
                if (dx) {
                    Eigen::Map<RowMat<T>> gx(input.grad_buffer().data(), g.kk, g.np);
                    gx.noalias() += wm.transpose() * gm;
                }
                return;
            }
            std::vector<T> cols(g.kk * g.strip_rows * g.wo);
            RowMat<T> gwacc;
            if (dk) gwacc = RowMat<T>::Zero(g.cout, g.kk);
            T* gx = dx ? input.grad_buffer().data() : nullptr;
            for (std::size_t oy = 0; oy < g.ho; oy += g.strip_rows) {
                const std::size_t rows = std::min(g.strip_rows, g.ho - oy), n = rows * g.wo;
                const auto gs = gm.middleCols(oy * g.wo, n);
                if (dk) {
                    im2col_strip(g, input.data().data(), oy, rows, cols.data());
                    Eigen::Map<const RowMat<T>> cm(cols.data(), g.kk, n);
                    gwacc.noalias() += gs * cm.transpose();
                }
                if (dx) {
                    Eigen::Map<RowMat<T>> dcols(cols.data(), g.kk, n);
                    dcols.noalias() = wm.transpose() * gs;
                    col2im_strip(g, cols.data(), oy, rows, gx);
                }
            }
            if (dk) {
                Eigen::Map<RowMat<T>> gw(kernel.grad_buffer().data(), g.cout, g.kk);
                gw += gwacc;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> bias_add(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& bias) {
    require_chw(input.shape(), "bias_add");
    const std::size_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
    if (bias.numel() != c) throw ShapeError("bias_add: bias has " + std::to_string(bias.numel()) + " values for " +
                                            std::to_string(c) + " channels");
    std::vector<T> y(input.data().begin(), input.data().end());
    const auto b = bias.data();
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < hw; ++i) y[ci * hw + i] += b[ci];
    const bool track = tracks(tape, {&input, &bias});
    Tensor<T> out(input.shape(), std::move(y), track);
    if (track) {
        tape.record([out, input, bias, c, hw]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            if (input.requires_grad()) {
                auto gi = input.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
            }
            if (bias.requires_grad()) {
                auto gb = bias.grad_buffer();
                for (std::size_t ci = 0; ci < c; ++ci) {
                    T acc = 0;
                    for (std::size_t i = 0; i < hw; ++i) acc += g[ci * hw + i];
                    gb[ci] += acc;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest(Tape<T>& tape, const Tensor<T>& input, int factor) {
    require_chw(input.shape(), "upsample_nearest");
    if (factor < 1) throw ShapeError("upsample_nearest: factor must be positive");
    const auto f = static_cast<std::size_t>(factor);
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t h2 = h * f, w2 = w * f;
    std::vector<T> y(c * h2 * w2);
    const auto x = input.data();
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t yy = 0; yy < h; ++yy) {
            const T* src = x.data() + (ci * h + yy) * w;
            T* dst = y.data() + (ci * h2 + yy * f) * w2;
            for (std::size_t xx = 0; xx < w; ++xx)
                for (std::size_t j = 0; j < f; ++j) dst[xx * f + j] = src[xx];
            for (std::size_t r = 1; r < f; ++r) std::copy(dst, dst + w2, dst + r * w2);
        }
    const bool track = tracks(tape, {&input});
    Tensor<T> out(Shape{c, h2, w2}, std::move(y), track);
    if (track) {
        tape.record([out, input, c, h, w, f, h2, w2]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            auto gi = input.grad_buffer();
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t yy = 0; yy < h2; ++yy) {
                    T* dst = gi.data() + (ci * h + yy / f) * w;
                    const T* src = g.data() + (ci * h2 + yy) * w2;
                    for (std::size_t xx = 0; xx < w; ++xx)
                        for (std::size_t j = 0; j < f; ++j) dst[xx] += src[xx * f + j];
                }
        });
    }
    return out;
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& input, T slope) {
    return unary(
        tape, input, [slope](T v) { return v >= T(0) ? v : slope * v; },
        [slope](T v, T) { return v >= T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input) {
    return unary(
        tape, input,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> instance_norm(Tape<T>& tape, const Tensor<T>& input, T eps) {
    require_chw(input.shape(), "instance_norm");
    const std::size_t c = input.dim(0), n = input.dim(1) * input.dim(2);
    const auto x = input.data();
    std::vector<T> y(x.size());
    std::vector<T> inv_std(c);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const T* xc = x.data() + ci * n;
        T mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += xc[i];
        mean /= T(n);
        T var = 0;
        for (std::size_t i = 0; i < n; ++i) var += (xc[i] - mean) * (xc[i] - mean);
        var /= T(n);
        inv_std[ci] = T(1) / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i) y[ci * n + i] = (xc[i] - mean) * inv_std[ci];
    }
    const bool track = tracks(tape, {&input});
    Tensor<T> out(input.shape(), std::move(y), track);
    if (track) {
        tape.record([out, input, inv_std = std::move(inv_std), c, n]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            const auto xhat = out.data();
            auto gi = input.grad_buffer();
            for (std::size_t ci = 0; ci < c; ++ci) {
                T sum_g = 0, sum_gx = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    sum_g += g[ci * n + i];
                    sum_gx += g[ci * n + i] * xhat[ci * n + i];
                }
                const T mean_g = sum_g / T(n), mean_gx = sum_gx / T(n);
                for (std::size_t i = 0; i < n; ++i)
                    gi[ci * n + i] += inv_std[ci] * (g[ci * n + i] - mean_g - xhat[ci * n + i] * mean_gx);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "add");
    const auto av = a.data(), bv = b.data();
    std::vector<T> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    const bool track = tracks(tape, {&a, &b});
    Tensor<T> out(a.shape(), std::move(y), track);
    if (track) {
        tape.record([out, a, b]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "sub");
    const auto av = a.data(), bv = b.data();
    std::vector<T> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    const bool track = tracks(tape, {&a, &b});
    Tensor<T> out(a.shape(), std::move(y), track);
    if (track) {
        tape.record([out, a, b]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a.shape(), b.shape(), "mul");
    const auto av = a.data(), bv = b.data();
    std::vector<T> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    const bool track = tracks(tape, {&a, &b});
    Tensor<T> out(a.shape(), std::move(y), track);
    if (track) {
        tape.record([out, a, b]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                const auto bv = b.data();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                const auto av = a.data();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scalar_mul(Tape<T>& tape, const Tensor<T>& a, T s) {
    return unary(tape, a, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, T s) {
    return unary(tape, a, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a) {
    return unary(
        tape, a, [](T v) { return std::abs(v); },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& a) {
    return unary(tape, a, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_chw(a.shape(), "concat_channels");
    require_chw(b.shape(), "concat_channels");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw ShapeError("concat_channels: spatial size " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> y;
    y.reserve(a.numel() + b.numel());
    y.insert(y.end(), a.data().begin(), a.data().end());
    y.insert(y.end(), b.data().begin(), b.data().end());
    const bool track = tracks(tape, {&a, &b});
    Tensor<T> out(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(y), track);
    if (track) {
        tape.record([out, a, b]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            const std::size_t na = a.numel();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> expand_channels(Tape<T>& tape, const Tensor<T>& plane, std::size_t channels) {
    require_chw(plane.shape(), "expand_channels");
    if (plane.dim(0) != 1) throw ShapeError("expand_channels: input must have one channel, got " + shape_str(plane.shape()));
    const std::size_t n = plane.numel();
    std::vector<T> y;
    y.reserve(n * channels);
    for (std::size_t c = 0; c < channels; ++c) y.insert(y.end(), plane.data().begin(), plane.data().end());
    const bool track = tracks(tape, {&plane});
    Tensor<T> out(Shape{channels, plane.dim(1), plane.dim(2)}, std::move(y), track);
    if (track) {
        tape.record([out, plane, channels, n]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            auto gp = plane.grad_buffer();
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t i = 0; i < n; ++i) gp[i] += g[c * n + i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> crop(Tape<T>& tape, const Tensor<T>& input, std::size_t height, std::size_t width) {
    require_chw(input.shape(), "crop");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (height > h || width > w)
        throw ShapeError("crop: window " + std::to_string(height) + "x" + std::to_string(width) + " exceeds " +
                         shape_str(input.shape()));
    std::vector<T> y(c * height * width);
    const auto x = input.data();
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t yy = 0; yy < height; ++yy)
            for (std::size_t xx = 0; xx < width; ++xx) y[(ci * height + yy) * width + xx] = x[(ci * h + yy) * w + xx];
    const bool track = tracks(tape, {&input});
    Tensor<T> out(Shape{c, height, width}, std::move(y), track);
    if (track) {
        tape.record([out, input, c, h, w, height, width]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            auto gi = input.grad_buffer();
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t yy = 0; yy < height; ++yy)
                    for (std::size_t xx = 0; xx < width; ++xx)
                        gi[(ci * h + yy) * w + xx] += g[(ci * height + yy) * width + xx];
        });
    }
    return out;
}

template <typename T>
Tensor<T> spatial_grad_l1(Tape<T>& tape, const Tensor<T>& input) {
    require_chw(input.shape(), "spatial_grad_l1");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const auto x = input.data();
    std::vector<T> y(h * w, T(0));
    for (std::size_t ci = 0; ci < c; ++ci) {
        const T* p = x.data() + ci * h * w;
        for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx) {
                const std::size_t i = yy * w + xx;
                if (xx + 1 < w) y[i] += std::abs(p[i + 1] - p[i]);
                if (yy + 1 < h) y[i] += std::abs(p[i + w] - p[i]);
            }
    }
    const bool track = tracks(tape, {&input});
    Tensor<T> out(Shape{1, h, w}, std::move(y), track);
    if (track) {
        tape.record([out, input, c, h, w]() mutable {
            if (!out.has_grad()) return;
            const auto g = out.grad();
            const auto xv = input.data();
            auto gi = input.grad_buffer();
            const auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
            for (std::size_t ci = 0; ci < c; ++ci) {
                const T* p = xv.data() + ci * h * w;
                T* q = gi.data() + ci * h * w;
                for (std::size_t yy = 0; yy < h; ++yy)
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const std::size_t i = yy * w + xx;
                        if (xx + 1 < w) {
                            const T d = sign(p[i + 1] - p[i]) * g[i];
                            q[i + 1] += d;
                            q[i] -= d;
                        }
                        if (yy + 1 < h) {
                            const T d = sign(p[i + w] - p[i]) * g[i];
                            q[i + w] += d;
                            q[i] -= d;
                        }
                    }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.data()) acc += v;
    const bool track = tracks(tape, {&a});
    Tensor<T> out(Shape{}, std::vector<T>{acc}, track);
    if (track) {
        tape.record([out, a]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            for (T& v : a.grad_buffer()) v += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> region_mean(Tape<T>& tape, const Tensor<T>& a, const PixelMask& mask) {
    require_chw(a.shape(), "region_mean");
    const std::size_t c = a.dim(0), hw = a.dim(1) * a.dim(2);
    if (mask.height != a.dim(1) || mask.width != a.dim(2))
        throw ShapeError("region_mean: mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                         " vs tensor " + shape_str(a.shape()));
    const std::size_t count = mask.count();
    if (count == 0) throw ShapeError("region_mean: empty region");
    const auto x = a.data();
    T acc = 0;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < hw; ++i)
            if (mask.bits[i]) acc += x[ci * hw + i];
    const T inv = T(1) / T(count);
    const bool track = tracks(tape, {&a});
    Tensor<T> out(Shape{}, std::vector<T>{acc * inv}, track);
    if (track) {
        tape.record([out, a, bits = mask.bits, c, hw, inv]() mutable {
            if (!out.has_grad()) return;
            const T g = out.grad()[0] * inv;
            auto ga = a.grad_buffer();
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t i = 0; i < hw; ++i)
                    if (bits[i]) ga[ci * hw + i] += g;
        });
    }
    return out;
}

#define DIPMATTE_INSTANTIATE_OPS(T)                                                                    \
    template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, int);                      \
    template Tensor<T> bias_add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> upsample_nearest(Tape<T>&, const Tensor<T>&, int);                              \
    template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                                      \
    template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                            \
    template Tensor<T> instance_norm(Tape<T>&, const Tensor<T>&, T);                                   \
    template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> scalar_mul(Tape<T>&, const Tensor<T>&, T);                                      \
    template Tensor<T> add_scalar(Tape<T>&, const Tensor<T>&, T);                                      \
    template Tensor<T> abs(Tape<T>&, const Tensor<T>&);                                                \
    template Tensor<T> square(Tape<T>&, const Tensor<T>&);                                             \
    template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> expand_channels(Tape<T>&, const Tensor<T>&, std::size_t);                       \
    template Tensor<T> crop(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                     \
    template Tensor<T> spatial_grad_l1(Tape<T>&, const Tensor<T>&);                                    \
    template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                \
    template Tensor<T> region_mean(Tape<T>&, const Tensor<T>&, const PixelMask&);

DIPMATTE_INSTANTIATE_OPS(float)
DIPMATTE_INSTANTIATE_OPS(double)

} // namespace dipmatte::ops
