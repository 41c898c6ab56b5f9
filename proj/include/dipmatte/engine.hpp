#pragma once

#include "dipmatte/losses.hpp"
#include "dipmatte/snapshot.hpp"
#include "dipmatte/unet.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace dipmatte {

struct EngineConfig {
    double lr = 1e-3;
    int max_iters = 4000;
    /// Warm-started runs stop once the total loss is at or below this value.
    /// Cold runs always execute max_iters iterations.
    std::optional<double> loss_threshold;
    std::uint64_t seed = 0;
    /// Invoke the snapshot callback every N iterations (0 disables).
    int snapshot_every = 0;
    /// Shared trunk for all three networks; the heads are assigned by the engine.
    UNetConfig architecture;
    /// Any loss term above this (or non-finite) aborts the run.
    double divergence_bound = 1e6;

    void validate() const;
};

struct MattingProblem {
    Tensor<float> image; // 3 x H x W, values in [0, 1]
    TrimapMasks masks;
    EngineConfig config;

    void validate() const;
};

/// The three jointly optimized networks: image+alpha, foreground, background.
struct MattingNetworks {
    Network<float> image;
    Network<float> fg;
    Network<float> bg;

    static MattingNetworks build(const UNetConfig& trunk, std::size_t height, std::size_t width,
                                 std::uint64_t seed);

    std::vector<Tensor<float>> parameter_tensors() const;
    MattingOutputs<float> forward(Tape<float>& tape) const;
    void zero_grad() const;

    WeightSnapshot snapshot() const;
    void restore(const WeightSnapshot& snapshot);
};

struct MatteResult {
    Tensor<float> alpha;     // 1 x H x W
    Tensor<float> fg;        // 3 x H x W
    Tensor<float> bg;        // 3 x H x W
    Tensor<float> image;     // reconstruction Î, 3 x H x W
    std::vector<LossBreakdown> loss_history;
    int iterations_run = 0;
    /// Final weights (and noise inputs) of all three networks.
    WeightSnapshot weights;
};

using SnapshotCallback = std::function<void(int iteration, const MattingNetworks& networks)>;

/// Runs Adam on all three networks against the six-term loss. Ground-truth
/// alpha is never an input. With `warm`, the networks start from the given
/// snapshot and stop at config.loss_threshold (capped by max_iters).
MatteResult extract_matte(const MattingProblem& problem, const WeightSnapshot* warm = nullptr,
                          const SnapshotCallback& on_snapshot = {});

/// Frame 0 runs cold; each later frame warm-starts from the previous frame's
/// final weights and stops at the loss threshold. Without an explicit
/// threshold, 1.05 x the cold run's final loss is used.
std::vector<MatteResult> extract_video(std::span<const MattingProblem> frames);

/// Default threshold for warm-started frames given the cold run's final loss.
double default_video_threshold(double cold_final_loss);

/// alpha * fg + (1 - alpha) * new_bg, per pixel and channel.
Tensor<float> composite(const Tensor<float>& alpha, const Tensor<float>& fg, const Tensor<float>& new_bg);

/// One line per iteration: "iter, L_I, L_alpha, L_F, L_B, L_c, L_e, total".
void write_loss_history(std::ostream& out, std::span<const LossBreakdown> history);

} // namespace dipmatte
