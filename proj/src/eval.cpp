#include "dipmatte/eval.hpp"

#include "dipmatte/losses.hpp"
#include "dipmatte/ops.hpp"
#include "dipmatte/rng.hpp"
#include "dipmatte/unet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

namespace dipmatte {
namespace {

void require_pair(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region) {
    if (alpha.shape() != gt.shape())
        throw ShapeError("metrics: alpha " + shape_str(alpha.shape()) + " vs ground truth " + shape_str(gt.shape()));
    if (alpha.ndim() != 3 || alpha.dim(0) != 1 || alpha.dim(1) != region.height || alpha.dim(2) != region.width)
        throw ShapeError("metrics: alpha " + shape_str(alpha.shape()) + " does not match the region");
    if (region.count() == 0) throw ShapeError("metrics: empty region");
}

using Inputs = std::span<const Tensor<double>>;

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1, double avoid = 0) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) {
        do {
            v = rng.uniform(lo, hi);
        } while (std::abs(v) < avoid);
    }
    return Tensor<double>(std::move(shape), std::move(data), true);
}

PixelMask random_mask(Rng& rng, std::size_t h, std::size_t w) {
    PixelMask m(h, w);
    for (auto& b : m.bits) b = rng.uniform() < 0.5;
    m.bits[0] = 1;
    return m;
}

TrimapMasks random_trimap(Rng& rng, std::size_t h, std::size_t w) {
    std::vector<TrimapLabel> labels(h * w);
    for (auto& l : labels) l = static_cast<TrimapLabel>(rng.uniform_int(0, 2));
    labels[0] = TrimapLabel::foreground;
    labels[1] = TrimapLabel::background;
    labels[2] = TrimapLabel::unknown;
    return TrimapMasks::from_labels(h, w, labels);
}

struct OpCase {
    std::vector<Tensor<double>> inputs;
    DoubleFn fn;
};

// Builds the point-th random instance for a named op.
OpCase make_op_case(std::string_view op, Rng& rng, int point) {
    using namespace ops;
    if (op == "conv2d") {
        const int stride = point % 2 == 0 ? 1 : 2;
        return {{random_tensor(rng, {2, 5, 6}), random_tensor(rng, {3, 2, 3, 3})},
                [stride](Tape<double>& t, Inputs in) { return conv2d(t, in[0], in[1], stride); }};
    }
    if (op == "bias_add")
        return {{random_tensor(rng, {3, 4, 4}), random_tensor(rng, {3})},
                [](Tape<double>& t, Inputs in) { return bias_add(t, in[0], in[1]); }};
    if (op == "upsample_nearest")
        return {{random_tensor(rng, {2, 3, 4})}, [](Tape<double>& t, Inputs in) { return upsample_nearest(t, in[0], 2); }};
    if (op == "leaky_relu")
        return {{random_tensor(rng, {2, 4, 4}, -1, 1, 0.05)},
                [](Tape<double>& t, Inputs in) { return leaky_relu(t, in[0], 0.1); }};
    if (op == "sigmoid")
        return {{random_tensor(rng, {2, 4, 4}, -4, 4)}, [](Tape<double>& t, Inputs in) { return sigmoid(t, in[0]); }};
    if (op == "instance_norm")
        return {{random_tensor(rng, {3, 4, 5})}, [](Tape<double>& t, Inputs in) { return instance_norm(t, in[0], 1e-5); }};
    if (op == "add")
        return {{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 4})},
                [](Tape<double>& t, Inputs in) { return add(t, in[0], in[1]); }};
    if (op == "sub")
        return {{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 4})},
                [](Tape<double>& t, Inputs in) { return sub(t, in[0], in[1]); }};
    if (op == "mul")
        return {{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 4})},
                [](Tape<double>& t, Inputs in) { return mul(t, in[0], in[1]); }};
    if (op == "scalar_mul") {
        const double s = rng.uniform(-2, 2);
        return {{random_tensor(rng, {2, 3, 4})}, [s](Tape<double>& t, Inputs in) { return scalar_mul(t, in[0], s); }};
    }
    if (op == "add_scalar") {
        const double s = rng.uniform(-2, 2);
        return {{random_tensor(rng, {2, 3, 4})}, [s](Tape<double>& t, Inputs in) { return add_scalar(t, in[0], s); }};
    }
    if (op == "abs")
        return {{random_tensor(rng, {2, 3, 4}, -1, 1, 0.05)}, [](Tape<double>& t, Inputs in) { return abs(t, in[0]); }};
    if (op == "square")
        return {{random_tensor(rng, {2, 3, 4})}, [](Tape<double>& t, Inputs in) { return square(t, in[0]); }};
    if (op == "concat_channels")
        return {{random_tensor(rng, {2, 3, 4}), random_tensor(rng, {1, 3, 4})},
                [](Tape<double>& t, Inputs in) { return concat_channels(t, in[0], in[1]); }};
    if (op == "expand_channels")
        return {{random_tensor(rng, {1, 3, 4})}, [](Tape<double>& t, Inputs in) { return expand_channels(t, in[0], 3); }};
    if (op == "crop")
        return {{random_tensor(rng, {2, 5, 6})}, [](Tape<double>& t, Inputs in) { return crop(t, in[0], 3, 4); }};
    if (op == "spatial_grad_l1")
        return {{random_tensor(rng, {3, 5, 5})}, [](Tape<double>& t, Inputs in) { return spatial_grad_l1(t, in[0]); }};
    if (op == "sum")
        return {{random_tensor(rng, {2, 3, 4})}, [](Tape<double>& t, Inputs in) { return sum(t, in[0]); }};
    if (op == "region_mean") {
        auto mask = random_mask(rng, 3, 4);
        return {{random_tensor(rng, {2, 3, 4})},
                [mask](Tape<double>& t, Inputs in) { return region_mean(t, in[0], mask); }};
    }
    throw ConfigError("gradcheck: no test case for op '" + std::string(op) + "'");
}

// Max relative gradient error of the six-term loss through three tiny U-nets.
double check_total_loss(Rng& rng) {
    constexpr std::size_t kSize = 8;
    UNetConfig trunk;
    trunk.depth = 1;
    trunk.channels = {4};
    trunk.skip_channels = 2;
    trunk.input_noise_channels = 4;
    const auto with = [&](std::vector<HeadSpec> heads) {
        auto c = trunk;
        c.output_heads = std::move(heads);
        return c;
    };
    const auto image_net = build_unet<double>(with({{"image", 3}, {"alpha", 1}}), kSize, kSize, rng.next());
    const auto fg_net = build_unet<double>(with({{"fg", 3}}), kSize, kSize, rng.next());
    const auto bg_net = build_unet<double>(with({{"bg", 3}}), kSize, kSize, rng.next());
    const auto masks = random_trimap(rng, kSize, kSize);
    auto image = random_tensor(rng, {3, kSize, kSize}, 0, 1).detach();

    std::vector<Tensor<double>> params;
    for (const auto* net : {&image_net, &fg_net, &bg_net}) {
        auto p = net->parameter_tensors();
        params.insert(params.end(), p.begin(), p.end());
    }
    // Parameters are captured by the networks; the inputs passed to fn are the
    // same handles, so perturbing them perturbs the networks.
    const DoubleFn fn = [&](Tape<double>& t, Inputs) {
        auto first = image_net.forward(t);
        MattingOutputs<double> out{first.at("image"), first.at("alpha"), fg_net.forward(t).at("fg"),
                                   bg_net.forward(t).at("bg")};
        return total_loss(t, out, image, masks).total;
    };
    return gradcheck(fn, params, rng.next());
}

} // namespace

double sad(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region) {
    require_pair(alpha, gt, region);
    const auto a = alpha.data(), g = gt.data();
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (region.bits[i]) acc += std::abs(static_cast<double>(a[i]) - g[i]);
    return acc;
}

double mse(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region) {
    require_pair(alpha, gt, region);
    const auto a = alpha.data(), g = gt.data();
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (region.bits[i]) {
            const double d = static_cast<double>(a[i]) - g[i];
            acc += d * d;
        }
    return acc / static_cast<double>(region.count());
}

RegionMetrics region_metrics(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region) {
    RegionMetrics m;
    m.pixels = region.count();
    m.sad = sad(alpha, gt, region);
    m.sad_per_pixel = m.sad / static_cast<double>(m.pixels);
    m.mse = mse(alpha, gt, region);
    return m;
}

Tensor<float> baseline_matte(const TrimapMasks& masks) {
    std::vector<float> data(masks.height * masks.width);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = masks.unknown.bits[i] ? 0.5f : masks.target[i];
    return Tensor<float>(Shape{1, masks.height, masks.width}, std::move(data));
}

double composite_residual(const Tensor<float>& image, const Tensor<float>& alpha, const Tensor<float>& fg,
                          const Tensor<float>& bg, const PixelMask& region) {
    if (image.shape() != fg.shape() || image.shape() != bg.shape() || alpha.ndim() != 3 || alpha.dim(0) != 1 ||
        image.ndim() != 3 || alpha.dim(1) != image.dim(1) || alpha.dim(2) != image.dim(2) ||
        region.height != image.dim(1) || region.width != image.dim(2))
        throw ShapeError("composite_residual: mismatched shapes");
    if (region.count() == 0) throw ShapeError("composite_residual: empty region");
    const std::size_t n = alpha.numel(), c = image.dim(0);
    const auto I = image.data(), a = alpha.data(), f = fg.data(), b = bg.data();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!region.bits[i]) continue;
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double r = I[ci * n + i] - (a[i] * static_cast<double>(f[ci * n + i]) +
                                              (1.0 - a[i]) * static_cast<double>(b[ci * n + i]));
            acc += r * r;
        }
    }
    return acc / static_cast<double>(region.count());
}

double gradcheck(const DoubleFn& fn, const std::vector<Tensor<double>>& inputs, std::uint64_t seed,
                 const GradcheckOptions& options) {
    // Fixed random reduction weights turn any output into a scalar.
    std::vector<double> weights;
    const auto objective = [&](Tape<double>& tape) {
        auto y = fn(tape, inputs);
        if (weights.empty()) {
            Rng rng(seed);
            weights.resize(y.numel());
            for (auto& w : weights) w = rng.uniform(0.5, 1.5);
        }
        if (y.numel() == 1) return ops::scalar_mul(tape, y, weights[0]);
        return ops::sum(tape, ops::mul(tape, y, Tensor<double>(y.shape(), weights)));
    };

    for (const auto& in : inputs) in.clear_grad();
    Tape<double> tape;
    const auto loss = objective(tape);
    tape.backward(loss);

    const auto eval = [&]() {
        Tape<double> inference(Tape<double>::Mode::inference);
        return objective(inference).item();
    };

    double worst = 0;
    for (auto input : inputs) {
        if (!input.requires_grad()) continue;
        const std::vector<double> analytic(input.grad().begin(), input.grad().end());
        auto x = input.mutable_data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double original = x[i];
            x[i] = original + options.step;
            const double up = eval();
            x[i] = original - options.step;
            const double down = eval();
            x[i] = original;
            const double numeric = (up - down) / (2 * options.step);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        input.clear_grad();
    }
    return worst;
}

bool GradcheckReport::passed() const {
    return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

void GradcheckReport::print(std::ostream& out) const {
    for (const auto& e : entries)
        out << (e.passed ? "PASS " : "FAIL ") << e.name << " points=" << e.points << " max_rel_error=" << e.max_rel_error
            << '\n';
    out << "gradcheck " << (passed() ? "passed" : "FAILED") << " (tolerance " << tolerance << ")\n";
}

GradcheckReport gradcheck_suite(std::uint64_t seed, double tolerance, int points) {
    GradcheckReport report;
    report.tolerance = tolerance;
    Rng rng(seed);
    for (const auto op : ops::kDifferentiableOps) {
        GradcheckEntry e{std::string(op), points, 0.0, false};
        for (int p = 0; p < points; ++p) {
            auto c = make_op_case(op, rng, p);
            e.max_rel_error = std::max(e.max_rel_error, gradcheck(c.fn, c.inputs, rng.next()));
        }
        e.passed = e.max_rel_error <= tolerance;
        report.entries.push_back(e);
    }
    GradcheckEntry total{"total_loss", points, 0.0, false};
    for (int p = 0; p < points; ++p) total.max_rel_error = std::max(total.max_rel_error, check_total_loss(rng));
    total.passed = total.max_rel_error <= tolerance;
    report.entries.push_back(total);
    return report;
}

} // namespace dipmatte
