#pragma once

#include "dipmatte/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dipmatte {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers mirroring the parameter list, plus the step count.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update, in place, using each parameter's grad
/// buffer (a parameter without a grad buffer sees a zero gradient). The state
/// is lazily sized on the first step and must mirror the parameters after that.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamHyper& hyper);

extern template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, const AdamHyper&);
extern template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, const AdamHyper&);

} // namespace dipmatte
