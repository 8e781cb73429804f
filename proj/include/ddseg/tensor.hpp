#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddseg/error.hpp"

namespace ddseg {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
    bool is_leaf = true;
};

// Dense row-major tensor handle. Copies share storage; use clone() for a deep
// copy. Scalar type is a template parameter so every kernel also exists in a
// 64-bit instantiation for gradient checking.
template <typename T>
class BasicTensor {
   public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0}) : impl_(std::make_shared<TensorStorage<T>>()) {
        for (auto d : shape) {
            if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
        }
        impl_->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
        impl_->shape = std::move(shape);
    }

    BasicTensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorStorage<T>>()) {
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
            throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                             shape_str(shape));
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(values);
    }

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T{0}); }
    static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), T{1}); }
    static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, std::vector<T>{v}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    // Extent of axis i; negative i counts from the back.
    std::int64_t dim(int i) const {
        const int r = rank();
        if (i < 0) i += r;
        if (i < 0 || i >= r) throw ShapeError("axis out of range for shape " + shape_str(shape()));
        return impl_->shape[static_cast<std::size_t>(i)];
    }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    T* ptr() { return impl_->data.data(); }
    const T* ptr() const { return impl_->data.data(); }
    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return impl_->data[0];
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    // Gradient buffer, allocated as zeros on first use.
    std::span<T> grad_mut() const {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T{0});
        return impl_->grad;
    }
    void zero_grad() const {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T{0});
    }
    void clear_grad() const { impl_->grad.clear(); }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    BasicTensor& set_requires_grad(bool on = true) {
        impl_->requires_grad = on;
        return *this;
    }
    bool is_leaf() const { return impl_->is_leaf; }

    // Deep copy of values only; the result is a fresh leaf.
    BasicTensor clone() const { return BasicTensor(impl_->shape, impl_->data); }
    BasicTensor detach() const { return clone(); }

    bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }
    TensorStorage<T>* storage() const { return impl_.get(); }

   private:
    std::shared_ptr<TensorStorage<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Ordered record of differentiable operations. Ops are appended as they run,
// so the record is already in topological order and backward() is a single
// reverse sweep.
//
// Gradient contract: backward() resets every intermediate (op-output) gradient
// and accumulates into leaf gradients. Calling it twice without zeroing the
// leaves therefore doubles their gradients.
template <typename T>
class BasicTape {
   public:
    struct Op {
        const char* name;
        std::vector<BasicTensor<T>> inputs;
        BasicTensor<T> output;
        std::function<void()> backward;
    };

    void record(Op op) { ops_.push_back(std::move(op)); }

    void backward(const BasicTensor<T>& loss) {
        if (!loss.defined() || loss.numel() != 1) {
            throw ShapeError("backward() needs a scalar loss");
        }
        if (!loss.requires_grad()) throw ShapeError("backward() on a loss that is not on the tape");
        for (auto& op : ops_) op.output.zero_grad();
        loss.grad_mut()[0] += T{1};
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
            if (it->output.has_grad()) it->backward();
        }
    }

    void reset() { ops_.clear(); }
    std::size_t size() const { return ops_.size(); }
    std::span<const Op> ops() const { return ops_; }

   private:
    std::vector<Op> ops_;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

namespace detail {
template <typename T>
BasicTape<T>*& active_tape() {
    thread_local BasicTape<T>* tape = nullptr;
    return tape;
}
}  // namespace detail

// Makes `tape` the recording target for this thread until destruction.
template <typename T>
class BasicTapeScope {
   public:
    explicit BasicTapeScope(BasicTape<T>& tape) : prev_(detail::active_tape<T>()) {
        detail::active_tape<T>() = &tape;
    }
    ~BasicTapeScope() { detail::active_tape<T>() = prev_; }
    BasicTapeScope(const BasicTapeScope&) = delete;
    BasicTapeScope& operator=(const BasicTapeScope&) = delete;

   private:
    BasicTape<T>* prev_;
};

using TapeScope = BasicTapeScope<float>;
using TapeScope64 = BasicTapeScope<double>;

// Suspends recording on this thread (inference paths).
template <typename T>
class BasicNoGradScope {
   public:
    BasicNoGradScope() : prev_(detail::active_tape<T>()) { detail::active_tape<T>() = nullptr; }
    ~BasicNoGradScope() { detail::active_tape<T>() = prev_; }
    BasicNoGradScope(const BasicNoGradScope&) = delete;
    BasicNoGradScope& operator=(const BasicNoGradScope&) = delete;

   private:
    BasicTape<T>* prev_;
};

using NoGradScope = BasicNoGradScope<float>;

}  // namespace ddseg
