#include "dipmatte/tensor.hpp"

#include <algorithm>
#include <numeric>

namespace dipmatte {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t c, std::size_t y, std::size_t x) const {
    const auto& s = impl_->shape;
    return impl_->data[(c * s[1] + y) * s[2] + x];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return Tensor<U>(impl_->shape, std::move(out), false);
}

std::size_t PixelMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

template <typename T>
void Tape<T>::record(std::function<void()> adjoint) {
    if (!recording()) return;
    if (consumed_) throw AutodiffError("tape already consumed by backward(); reset() before recording");
    entries_.push_back(std::move(adjoint));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) throw AutodiffError("backward() called twice without reset()");
    if (!loss.defined() || loss.numel() != 1)
        throw AutodiffError("backward() requires a scalar loss");
    if (!loss.requires_grad()) throw AutodiffError("loss does not depend on any differentiable tensor");
    consumed_ = true;
    Tensor<T> seed = loss;
    seed.grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

template <typename T>
void Tape<T>::reset() {
    entries_.clear();
    consumed_ = false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;

} // namespace dipmatte
