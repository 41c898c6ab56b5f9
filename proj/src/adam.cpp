#include "dipmatte/adam.hpp"

#include <cmath>

namespace dipmatte {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamHyper& hyper) {
    if (hyper.lr <= 0) throw ConfigError("adam: learning rate must be positive");
    if (state.t == 0 && state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), T(0));
            state.v.emplace_back(p.numel(), T(0));
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel())
            throw ShapeError("adam: state buffer " + std::to_string(i) + " does not match parameter shape " +
                             shape_str(params[i].shape()));

    const std::int64_t t = ++state.t;
    const T b1 = T(hyper.beta1), b2 = T(hyper.beta2);
    const T correction1 = T(1) - T(std::pow(hyper.beta1, static_cast<double>(t)));
    const T correction2 = T(1) - T(std::pow(hyper.beta2, static_cast<double>(t)));
    const T lr = T(hyper.lr), eps = T(hyper.eps);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto x = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto g = p.grad();
        const bool has_grad = !g.empty();
        for (std::size_t j = 0; j < x.size(); ++j) {
            const T gj = has_grad ? g[j] : T(0);
            m[j] = b1 * m[j] + (T(1) - b1) * gj;
            v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
            const T m_hat = m[j] / correction1;
            const T v_hat = v[j] / correction2;
            x[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, const AdamHyper&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, const AdamHyper&);

} // namespace dipmatte
