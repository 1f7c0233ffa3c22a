#pragma once

#include <functional>
#include <memory>
#include <random>
#include <span>

#include "nusr/common.hpp"

namespace nusr {

struct TensorImpl {
    Shape shape;
    std::vector<scalar> data;
    bool requires_grad = false;
    std::vector<scalar> grad;  // empty until first accumulation
};

// Tape of executed differentiable operations. Constructing a Graph makes it
// the active recorder for the current thread; destruction restores the
// previous one. backward() replays the recorded ops exactly once, in reverse
// execution order, then marks the graph consumed.
class Graph {
public:
    Graph();
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* active();

    void record(std::function<void()> op);
    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }
    void run_backward();

private:
    std::vector<std::function<void()>> ops_;
    bool consumed_ = false;
    Graph* prev_ = nullptr;
};

// Dense row-major tensor handle. Cheap to copy (shared payload). Data is
// treated as immutable after an op creates it, except for gradient
// accumulation and in-place parameter updates between graph lifetimes.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, scalar value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<scalar> data, bool requires_grad = false);
    static Tensor uniform(Shape shape, scalar lo, scalar hi, std::mt19937_64& rng,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::int64_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    // Handle semantics: the payload is shared, so mutators are usable through
    // const handles (as with a smart pointer).
    std::span<const scalar> data() const { return impl_->data; }
    std::span<scalar> data_mut() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) const { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const scalar> grad() const;
    std::span<scalar> grad_mut() const;
    void zero_grad() const;
    // Allocates a zero buffer on first use, then adds elementwise.
    void accumulate_grad(std::span<const scalar> g) const;

    // Value of a single-element tensor.
    scalar item() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Multi-line text rendering of a tensor (one grid per channel) for diffing.
std::string to_text_grid(const Tensor& t, int precision = 6);

// Throws if any element is non-finite; called by ops when finite checks are on.
void check_finite(const Tensor& t, const char* op_name);

}  // namespace nusr
