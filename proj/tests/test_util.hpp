#pragma once

// Shared helpers for the test suites: tensor construction/comparison and a
// deterministic RNG so every test is replayable from its hard-coded seed.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nusr/tensor.hpp"

namespace nusr::testutil {

inline Tensor tensor_of(Shape shape, std::vector<double> values, bool requires_grad = false) {
    std::vector<scalar> data(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) data[i] = static_cast<scalar>(values[i]);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Values 0, 1, 2, ... in row-major order.
inline Tensor ramp(Shape shape, bool requires_grad = false) {
    std::vector<scalar> data(static_cast<std::size_t>(numel(shape)));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<scalar>(i);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
    return Tensor::uniform(std::move(shape), static_cast<scalar>(lo), static_cast<scalar>(hi),
                           rng, requires_grad);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[u]) -
                                         static_cast<double>(b.data()[u])));
    }
    return worst;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        if (a.data()[u] != b.data()[u]) return false;
    }
    return true;
}

}  // namespace nusr::testutil
