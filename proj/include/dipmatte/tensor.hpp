#pragma once

#include "dipmatte/error.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dipmatte {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor handle. Copies share storage; the autodiff graph
/// refers to tensors through these handles. Image tensors use C x H x W.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const& { return impl_->data; }
    // A temporary handle may own the only reference to its storage.
    std::span<const T> data() const&& = delete;
    /// Mutable access is reserved for leaves (parameters, optimizer updates).
    std::span<T> mutable_data() { return impl_->data; }
    T item() const;
    T at(std::size_t c, std::size_t y, std::size_t x) const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    /// Grad buffer, allocated (zero-filled) on first access.
    std::span<T> grad_buffer() const;
    void clear_grad() const { impl_->grad.clear(); }

    /// Independent copy of the values with no grad and no graph linkage.
    Tensor detach() const;
    template <typename U>
    Tensor<U> cast() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  private:
    struct Impl {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

/// Boolean pixel plane, used to select loss regions.
struct PixelMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    PixelMask() = default;
    PixelMask(std::size_t h, std::size_t w, bool value = false)
        : height(h), width(w), bits(h * w, value ? 1 : 0) {}

    bool operator()(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
    std::size_t size() const { return bits.size(); }
    std::size_t count() const;
};

/// Ordered record of executed differentiable operations. backward() replays
/// the recorded adjoints in reverse execution order, exactly once.
template <typename T>
class Tape {
  public:
    enum class Mode { record, inference };

    explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return mode_ == Mode::record; }
    void record(std::function<void()> adjoint);
    void backward(const Tensor<T>& loss);
    void reset();

    std::size_t size() const { return entries_.size(); }
    bool consumed() const { return consumed_; }

  private:
    Mode mode_;
    std::vector<std::function<void()>> entries_;
    bool consumed_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

} // namespace dipmatte
