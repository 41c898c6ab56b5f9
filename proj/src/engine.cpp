#include "dipmatte/engine.hpp"

#include "dipmatte/adam.hpp"
#include "dipmatte/rng.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <ostream>

namespace dipmatte {
namespace {

UNetConfig with_heads(UNetConfig trunk, std::vector<HeadSpec> heads) {
    trunk.output_heads = std::move(heads);
    return trunk;
}

void check_divergence(const LossBreakdown& b, int iteration, double bound) {
    const auto terms = b.terms();
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (!std::isfinite(terms[i]) || terms[i] > bound)
            throw DivergenceError(std::string(LossBreakdown::kTermNames[i]), iteration, terms[i]);
    if (!std::isfinite(b.total) || b.total > bound) throw DivergenceError("total", iteration, b.total);
}

} // namespace

void EngineConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("engine: learning rate must be positive");
    if (max_iters < 1) throw ConfigError("engine: max_iters must be at least 1");
    if (loss_threshold && !(*loss_threshold >= 0)) throw ConfigError("engine: loss threshold must be non-negative");
    if (snapshot_every < 0) throw ConfigError("engine: snapshot_every must be non-negative");
}

void MattingProblem::validate() const {
    config.validate();
    if (!image.defined() || image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("matting problem: image must be 3 x H x W");
    if (image.dim(1) != masks.height || image.dim(2) != masks.width)
        throw ShapeError("matting problem: image is " + std::to_string(image.dim(1)) + "x" +
                         std::to_string(image.dim(2)) + " but trimap is " + std::to_string(masks.height) + "x" +
                         std::to_string(masks.width));
    if (masks.constrained.count() == 0) throw ConfigError("matting problem: trimap has no constrained pixels");
}

MattingNetworks MattingNetworks::build(const UNetConfig& trunk, std::size_t height, std::size_t width,
                                       std::uint64_t seed) {
    return MattingNetworks{
        build_unet<float>(with_heads(trunk, {{"image", 3}, {"alpha", 1}}), height, width, derive_seed(seed, 0)),
        build_unet<float>(with_heads(trunk, {{"fg", 3}}), height, width, derive_seed(seed, 1)),
        build_unet<float>(with_heads(trunk, {{"bg", 3}}), height, width, derive_seed(seed, 2)),
    };
}

std::vector<Tensor<float>> MattingNetworks::parameter_tensors() const {
    auto params = image.parameter_tensors();
    for (const auto* net : {&fg, &bg}) {
        auto more = net->parameter_tensors();
        params.insert(params.end(), more.begin(), more.end());
    }
    return params;
}

MattingOutputs<float> MattingNetworks::forward(Tape<float>& tape) const {
    auto first = image.forward(tape);
    return {first.at("image"), first.at("alpha"), fg.forward(tape).at("fg"), bg.forward(tape).at("bg")};
}

void MattingNetworks::zero_grad() const {
    image.zero_grad();
    fg.zero_grad();
    bg.zero_grad();
}

WeightSnapshot MattingNetworks::snapshot() const {
    WeightSnapshot s;
    append_network(s, image, "image.");
    append_network(s, fg, "fg.");
    append_network(s, bg, "bg.");
    return s;
}

void MattingNetworks::restore(const WeightSnapshot& snapshot) {
    restore_network(snapshot, image, "image.");
    restore_network(snapshot, fg, "fg.");
    restore_network(snapshot, bg, "bg.");
}

MatteResult extract_matte(const MattingProblem& problem, const WeightSnapshot* warm,
                          const SnapshotCallback& on_snapshot) {
    problem.validate();
    const auto& cfg = problem.config;
    const auto& masks = problem.masks;
    if (masks.fg.count() == 0)
        std::cerr << "warning: trimap has no foreground pixels; the foreground term is zero and F is unconstrained\n";
    if (masks.bg.count() == 0)
        std::cerr << "warning: trimap has no background pixels; the background term is zero and B is unconstrained\n";

    auto nets = MattingNetworks::build(cfg.architecture, masks.height, masks.width, cfg.seed);
    if (warm) nets.restore(*warm);
    const bool threshold_stop = warm != nullptr && cfg.loss_threshold.has_value();

    auto params = nets.parameter_tensors();
    AdamState<float> adam;
    const AdamHyper hyper{cfg.lr};

    MatteResult result;
    MattingOutputs<float> outputs;
    bool outputs_current = false;
    for (int it = 0; it < cfg.max_iters; ++it) {
        Tape<float> tape;
        outputs = nets.forward(tape);
        const auto terms = total_loss(tape, outputs, problem.image, masks);
        const auto values = terms.values();
        result.loss_history.push_back(values);
        check_divergence(values, it, cfg.divergence_bound);
        if (threshold_stop && values.total <= *cfg.loss_threshold) {
            outputs_current = true;
            break;
        }
        tape.backward(terms.total);
        adam_step<float>(params, adam, hyper);
        nets.zero_grad();
        if (cfg.snapshot_every > 0 && on_snapshot && (it + 1) % cfg.snapshot_every == 0) on_snapshot(it + 1, nets);
    }
    if (!outputs_current) {
        Tape<float> inference(Tape<float>::Mode::inference);
        outputs = nets.forward(inference);
    }

    result.alpha = outputs.alpha.detach();
    result.fg = outputs.fg.detach();
    result.bg = outputs.bg.detach();
    result.image = outputs.image.detach();
    result.iterations_run = static_cast<int>(result.loss_history.size());
    result.weights = nets.snapshot();
    return result;
}

double default_video_threshold(double cold_final_loss) { return 1.05 * cold_final_loss; }

std::vector<MatteResult> extract_video(std::span<const MattingProblem> frames) {
    std::vector<MatteResult> results;
    if (frames.empty()) return results;
    const std::size_t h = frames[0].masks.height, w = frames[0].masks.width;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (frames[i].masks.height != h || frames[i].masks.width != w)
            throw ShapeError("video: frame " + std::to_string(i) + " is " + std::to_string(frames[i].masks.height) +
                             "x" + std::to_string(frames[i].masks.width) + ", expected " + std::to_string(h) + "x" +
                             std::to_string(w));

    results.push_back(extract_matte(frames[0]));
    const double threshold = frames[0].config.loss_threshold.value_or(
        default_video_threshold(results.front().loss_history.back().total));
    for (std::size_t i = 1; i < frames.size(); ++i) {
        MattingProblem frame = frames[i];
        frame.config.loss_threshold = threshold;
        results.push_back(extract_matte(frame, &results.back().weights));
    }
    return results;
}

Tensor<float> composite(const Tensor<float>& alpha, const Tensor<float>& fg, const Tensor<float>& new_bg) {
    if (alpha.ndim() != 3 || alpha.dim(0) != 1) throw ShapeError("composite: alpha must be 1 x H x W");
    if (fg.shape() != new_bg.shape() || fg.ndim() != 3 || fg.dim(1) != alpha.dim(1) || fg.dim(2) != alpha.dim(2))
        throw ShapeError("composite: alpha " + shape_str(alpha.shape()) + ", fg " + shape_str(fg.shape()) +
                         ", background " + shape_str(new_bg.shape()));
    const std::size_t c = fg.dim(0), n = alpha.numel();
    const auto a = alpha.data(), f = fg.data(), b = new_bg.data();
    std::vector<float> out(fg.numel());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < n; ++i) out[ci * n + i] = a[i] * f[ci * n + i] + (1.0f - a[i]) * b[ci * n + i];
    return Tensor<float>(fg.shape(), std::move(out));
}

void write_loss_history(std::ostream& out, std::span<const LossBreakdown> history) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(9);
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& b = history[i];
        out << i;
        for (double v : b.terms()) out << ", " << v;
        out << ", " << b.total << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

} // namespace dipmatte
