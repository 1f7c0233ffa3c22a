#include "nusr/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "nusr/rng.hpp"

namespace nusr {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {
#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

thread_local Graph* t_active_graph = nullptr;

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
}
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

Graph::Graph() {
    prev_ = t_active_graph;
    t_active_graph = this;
}

Graph::~Graph() { t_active_graph = prev_; }

Graph* Graph::active() { return t_active_graph; }

void Graph::record(std::function<void()> op) { ops_.push_back(std::move(op)); }

void Graph::run_backward() {
    if (consumed_) throw UsageError("backward already ran on this graph");
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
    consumed_ = true;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    validate_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<std::size_t>(nusr::numel(shape)), scalar(0));
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, scalar value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl()->data) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<scalar> data, bool requires_grad) {
    validate_shape(shape);
    if (nusr::numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, scalar lo, scalar hi, std::mt19937_64& rng,
                       bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl()->data) {
        v = static_cast<scalar>(rand_range(rng, static_cast<double>(lo), static_cast<double>(hi)));
    }
    return t;
}

std::span<const scalar> Tensor::grad() const {
    if (impl_->grad.empty()) throw UsageError("tensor has no gradient (backward not run?)");
    return impl_->grad;
}

std::span<scalar> Tensor::grad_mut() const {
    if (impl_->grad.empty()) throw UsageError("tensor has no gradient (backward not run?)");
    return impl_->grad;
}

void Tensor::zero_grad() const {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->grad.size(), scalar(0));
}

void Tensor::accumulate_grad(std::span<const scalar> g) const {
    if (g.size() != impl_->data.size()) {
        throw DimensionError("gradient size mismatch: " + std::to_string(g.size()) + " vs " +
                             std::to_string(impl_->data.size()));
    }
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), scalar(0));
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

scalar Tensor::item() const {
    if (numel() != 1) throw UsageError("item() requires a single-element tensor, shape is " + shape_str(shape()));
    return impl_->data[0];
}

std::string to_text_grid(const Tensor& t, int precision) {
    std::ostringstream out;
    out << "shape " << shape_str(t.shape()) << "\n";
    const Shape& s = t.shape();
    std::int64_t w = s.back();
    std::int64_t h = s.size() >= 2 ? s[s.size() - 2] : 1;
    std::int64_t planes = t.numel() / (w * h);
    char buf[64];
    const scalar* p = t.data().data();
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        if (planes > 1) out << "plane " << pl << "\n";
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                std::snprintf(buf, sizeof(buf), "%+.*e", precision,
                              static_cast<double>(p[(pl * h + y) * w + x]));
                out << (x ? " " : "") << buf;
            }
            out << "\n";
        }
    }
    return out.str();
}

void check_finite(const Tensor& t, const char* op_name) {
    if (!g_finite_checks) return;
    for (scalar v : t.data()) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw Error(std::string(op_name) + " produced a non-finite value");
        }
    }
}

}  // namespace nusr
