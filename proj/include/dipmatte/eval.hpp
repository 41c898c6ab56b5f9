#pragma once

#include "dipmatte/trimap.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dipmatte {

/// Sum of |alpha - gt| over the region. Empty region or shape mismatch throws.
double sad(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region);
/// Mean of (alpha - gt)^2 over the region.
double mse(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region);

struct RegionMetrics {
    std::size_t pixels = 0;
    double sad = 0;
    double sad_per_pixel = 0;
    double mse = 0;
};

RegionMetrics region_metrics(const Tensor<float>& alpha, const Tensor<float>& gt, const PixelMask& region);

/// Uninformed matte: T on the constrained region, 0.5 on U.
Tensor<float> baseline_matte(const TrimapMasks& masks);

/// Mean over a region of |I - (alpha F + (1 - alpha) B)|^2 (RGB distance squared).
double composite_residual(const Tensor<float>& image, const Tensor<float>& alpha, const Tensor<float>& fg,
                          const Tensor<float>& bg, const PixelMask& region);

// ---------------------------------------------------------------------------
// Finite-difference gradient verification (64-bit)
// ---------------------------------------------------------------------------

using DoubleFn = std::function<Tensor<double>(Tape<double>&, std::span<const Tensor<double>>)>;

struct GradcheckOptions {
    double step = 1e-6;
    /// Elementwise error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    double floor = 1e-6;
};

/// Checks the reverse-mode gradient of fn at `inputs` against central
/// differences. Non-scalar outputs are reduced with fixed random weights so
/// every output element is exercised. Returns the max elementwise relative
/// error over all inputs that require grad.
double gradcheck(const DoubleFn& fn, const std::vector<Tensor<double>>& inputs, std::uint64_t seed,
                 const GradcheckOptions& options = {});

struct GradcheckEntry {
    std::string name;
    int points = 0;
    double max_rel_error = 0;
    bool passed = false;
};

struct GradcheckReport {
    double tolerance = 1e-3;
    std::vector<GradcheckEntry> entries;

    bool passed() const;
    void print(std::ostream& out) const;
};

/// Every differentiable tensor op plus the full six-term loss through three
/// depth-1 U-nets on an 8x8 image, each at `points` random points.
GradcheckReport gradcheck_suite(std::uint64_t seed, double tolerance = 1e-3, int points = 10);

} // namespace dipmatte
