// Tensor engine: forward semantics of every op against independent oracles,
// exact analytic gradient facts, shape algebra, and determinism. Numeric
// finite-difference gradient checks live in the 64-bit test lane.

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "nusr/ops.hpp"
#include "test_util.hpp"

using namespace nusr;
using namespace nusr::testutil;

namespace {

// Brute-force cross-correlation written independently of the engine: four
// nested loops over output position and kernel position, no padding logic
// shared with the implementation.
std::vector<double> direct_conv2d(const std::vector<double>& in, std::int64_t h, std::int64_t w,
                                  const std::vector<double>& kernel, std::int64_t k,
                                  std::int64_t padding, std::int64_t stride, double bias) {
    const std::int64_t h_out = (h + 2 * padding - k) / stride + 1;
    const std::int64_t w_out = (w + 2 * padding - k) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(h_out * w_out), bias);
    for (std::int64_t oy = 0; oy < h_out; ++oy) {
        for (std::int64_t ox = 0; ox < w_out; ++ox) {
            for (std::int64_t ky = 0; ky < k; ++ky) {
                for (std::int64_t kx = 0; kx < k; ++kx) {
                    const std::int64_t iy = oy * stride + ky - padding;
                    const std::int64_t ix = ox * stride + kx - padding;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    out[static_cast<std::size_t>(oy * w_out + ox)] +=
                        in[static_cast<std::size_t>(iy * w + ix)] *
                        kernel[static_cast<std::size_t>(ky * k + kx)];
                }
            }
        }
    }
    return out;
}

// Direct transposed convolution as scatter-add: every input pixel adds its
// value times the kernel into the stride-spaced output neighbourhood.
std::vector<double> direct_conv_transpose2d(const std::vector<double>& in, std::int64_t h,
                                            std::int64_t w, const std::vector<double>& kernel,
                                            double bias) {
    const std::int64_t h_out = 2 * h, w_out = 2 * w;
    std::vector<double> out(static_cast<std::size_t>(h_out * w_out), bias);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t ky = 0; ky < 2; ++ky) {
                for (std::int64_t kx = 0; kx < 2; ++kx) {
                    out[static_cast<std::size_t>((2 * y + ky) * w_out + (2 * x + kx))] +=
                        in[static_cast<std::size_t>(y * w + x)] *
                        kernel[static_cast<std::size_t>(ky * 2 + kx)];
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("conv2d: identity kernel reproduces the input") {
    std::mt19937_64 rng(11);
    Tensor x = random_tensor({1, 1, 5, 5}, rng);
    Tensor w = tensor_of({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, w, b, 1, 1);
    CHECK(y.shape() == Shape{1, 1, 5, 5});
    CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d: matches the direct cross-correlation oracle") {
    Tensor x = ramp({1, 1, 4, 4});
    std::mt19937_64 rng(12);
    Tensor w = random_tensor({1, 1, 3, 3}, rng);
    Tensor b = tensor_of({1}, {0.25});
    Tensor y = conv2d(x, w, b, 0, 1);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});

    std::vector<double> in(16), kern(9);
    for (int i = 0; i < 16; ++i) in[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < 9; ++i) kern[static_cast<std::size_t>(i)] = w.data()[static_cast<std::size_t>(i)];
    std::vector<double> expect = direct_conv2d(in, 4, 4, kern, 3, 0, 1, 0.25);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(static_cast<double>(y.data()[i]) == doctest::Approx(expect[i]).epsilon(1e-6));
    }
}

TEST_CASE("conv2d: multi-channel strided case matches the oracle channel sums") {
    std::mt19937_64 rng(13);
    Tensor x = random_tensor({1, 2, 6, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor y = conv2d(x, w, b, 1, 2);
    REQUIRE(y.shape() == Shape{1, 3, 3, 3});

    for (std::int64_t co = 0; co < 3; ++co) {
        std::vector<double> acc(9, 0.0);
        for (std::int64_t ci = 0; ci < 2; ++ci) {
            std::vector<double> in(36), kern(9);
            for (int i = 0; i < 36; ++i) {
                in[static_cast<std::size_t>(i)] = x.data()[static_cast<std::size_t>(ci * 36 + i)];
            }
            for (int i = 0; i < 9; ++i) {
                kern[static_cast<std::size_t>(i)] =
                    w.data()[static_cast<std::size_t>((co * 2 + ci) * 9 + i)];
            }
            std::vector<double> part = direct_conv2d(in, 6, 6, kern, 3, 1, 2, 0.0);
            for (std::size_t i = 0; i < 9; ++i) acc[i] += part[i];
        }
        for (std::size_t i = 0; i < 9; ++i) {
            const double got = y.data()[static_cast<std::size_t>(co) * 9 + i];
            const double want = acc[i] + static_cast<double>(b.data()[static_cast<std::size_t>(co)]);
            CHECK(got == doctest::Approx(want).epsilon(1e-5));
        }
    }
}

TEST_CASE("conv2d: channel mismatch raises a dimension error") {
    std::mt19937_64 rng(14);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor w = random_tensor({1, 3, 3, 3}, rng);
    Tensor b = Tensor::zeros({1});
    CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), DimensionError);
}

TEST_CASE("conv2d/conv_transpose2d: output shapes satisfy the formulas over a swept grid") {
    std::mt19937_64 rng(15);
    for (std::int64_t h = 3; h <= 12; ++h) {
        for (std::int64_t w = 3; w <= 12; ++w) {
            for (std::int64_t k : {1, 3, 5}) {
                for (std::int64_t p : {0, 1, 2}) {
                    for (std::int64_t s : {1, 2}) {
                        if (h + 2 * p < k || w + 2 * p < k) continue;
                        Tensor x = random_tensor({1, 1, h, w}, rng);
                        Tensor wt = random_tensor({2, 1, k, k}, rng);
                        Tensor b = Tensor::zeros({2});
                        Tensor y = conv2d(x, wt, b, p, s);
                        CHECK(y.dim(2) == (h + 2 * p - k) / s + 1);
                        CHECK(y.dim(3) == (w + 2 * p - k) / s + 1);
                    }
                }
            }
            Tensor x = random_tensor({1, 3, h, w}, rng);
            Tensor wt = random_tensor({3, 2, 2, 2}, rng);
            Tensor b = Tensor::zeros({2});
            Tensor y = conv_transpose2d(x, wt, b);
            CHECK(y.shape() == Shape{1, 2, 2 * h, 2 * w});
        }
    }
}

TEST_CASE("conv_transpose2d: single pixel expands to a 2x2 copy") {
    Tensor x = tensor_of({1, 1, 1, 1}, {3.5});
    Tensor w = tensor_of({1, 1, 2, 2}, {1, 1, 1, 1});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv_transpose2d(x, w, b);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == scalar(3.5));
}

TEST_CASE("conv_transpose2d: matches the direct scatter-add oracle") {
    std::mt19937_64 rng(16);
    Tensor x = random_tensor({1, 1, 3, 3}, rng);
    Tensor w = random_tensor({1, 1, 2, 2}, rng);
    Tensor b = tensor_of({1}, {-0.125});
    Tensor y = conv_transpose2d(x, w, b);
    REQUIRE(y.shape() == Shape{1, 1, 6, 6});

    std::vector<double> in(9), kern(4);
    for (int i = 0; i < 9; ++i) in[static_cast<std::size_t>(i)] = x.data()[static_cast<std::size_t>(i)];
    for (int i = 0; i < 4; ++i) kern[static_cast<std::size_t>(i)] = w.data()[static_cast<std::size_t>(i)];
    std::vector<double> expect = direct_conv_transpose2d(in, 3, 3, kern, -0.125);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(static_cast<double>(y.data()[i]) == doctest::Approx(expect[i]).epsilon(1e-6));
    }
}

TEST_CASE("conv_transpose2d: channel mismatch raises a dimension error") {
    std::mt19937_64 rng(17);
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    Tensor w = random_tensor({3, 1, 2, 2}, rng);  // expects 3 input channels
    Tensor b = Tensor::zeros({1});
    CHECK_THROWS_AS(conv_transpose2d(x, w, b), DimensionError);
}

TEST_CASE("maxpool2d: constants, the hand-evaluated grid, and odd-dim rejection") {
    Tensor c = Tensor::full({1, 1, 4, 4}, scalar(0.75));
    Tensor pc = maxpool2d(c);
    REQUIRE(pc.shape() == Shape{1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(pc.data()[i] == scalar(0.75));

    Tensor x = ramp({1, 1, 4, 4});
    Tensor y = maxpool2d(x);
    CHECK(y.data()[0] == scalar(5));
    CHECK(y.data()[1] == scalar(7));
    CHECK(y.data()[2] == scalar(13));
    CHECK(y.data()[3] == scalar(15));

    Tensor odd = Tensor::zeros({1, 1, 3, 4});
    CHECK_THROWS_AS(maxpool2d(odd), DimensionError);
}

TEST_CASE("maxpool2d: backward places gradient 1 exactly on window maxima") {
    Tensor x = ramp({1, 1, 4, 4}, /*requires_grad=*/true);
    {
        Graph g;
        Tensor loss = sum(maxpool2d(x));
        backward(loss);
    }
    REQUIRE(x.has_grad());
    for (std::int64_t i = 0; i < 16; ++i) {
        const bool is_max = i == 5 || i == 7 || i == 13 || i == 15;
        CHECK(x.grad()[static_cast<std::size_t>(i)] == (is_max ? scalar(1) : scalar(0)));
    }
}

TEST_CASE("relu: definition and idempotence") {
    Tensor x = tensor_of({3}, {-1, 0, 2});
    Tensor y = relu(x);
    CHECK(y.data()[0] == scalar(0));
    CHECK(y.data()[1] == scalar(0));
    CHECK(y.data()[2] == scalar(2));

    std::mt19937_64 rng(18);
    Tensor r = random_tensor({2, 3, 4, 4}, rng);
    CHECK(bit_equal(relu(relu(r)), relu(r)));
}

TEST_CASE("concat_channels: identity, stacking order, and slice round-trip") {
    std::mt19937_64 rng(19);
    Tensor single = random_tensor({1, 2, 3, 3}, rng);
    CHECK(bit_equal(concat_channels({single}), single));

    Tensor a = Tensor::full({1, 1, 2, 2}, scalar(4));
    Tensor b = Tensor::full({1, 1, 2, 2}, scalar(-2));
    Tensor cat = concat_channels({a, b});
    REQUIRE(cat.shape() == Shape{1, 2, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(cat.data()[i] == scalar(4));
    for (std::size_t i = 4; i < 8; ++i) CHECK(cat.data()[i] == scalar(-2));

    // Slicing the concatenation at the recorded channel offsets recovers every
    // input bit-exactly.
    Tensor p = random_tensor({2, 2, 3, 4}, rng);
    Tensor q = random_tensor({2, 3, 3, 4}, rng);
    Tensor pq = concat_channels({p, q});
    const std::int64_t plane = 3 * 4;
    for (std::int64_t n = 0; n < 2; ++n) {
        for (std::int64_t c = 0; c < 5; ++c) {
            const Tensor& src = c < 2 ? p : q;
            const std::int64_t src_c = c < 2 ? c : c - 2;
            const std::int64_t src_channels = c < 2 ? 2 : 3;
            for (std::int64_t i = 0; i < plane; ++i) {
                CHECK(pq.data()[static_cast<std::size_t>((n * 5 + c) * plane + i)] ==
                      src.data()[static_cast<std::size_t>((n * src_channels + src_c) * plane + i)]);
            }
        }
    }

    Tensor mism = random_tensor({1, 1, 2, 3}, rng);
    CHECK_THROWS_AS(concat_channels({a, mism}), DimensionError);
    CHECK_THROWS_AS(concat_channels({}), DimensionError);
}

TEST_CASE("elementwise: arithmetic facts and the log domain guard") {
    CHECK(sum(Tensor::zeros({4})).item() == scalar(0));
    CHECK(mean(tensor_of({4}, {1, 2, 3, 4})).item() == scalar(2.5));

    Tensor neg = tensor_of({2}, {1.0, -0.5});
    CHECK_THROWS_AS(log(neg), DomainError);
    CHECK_THROWS_AS(log(Tensor::zeros({1})), DomainError);

    std::mt19937_64 rng(20);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor s = add(a, b);
    Tensor d = sub(a, b);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(s.data()[i] == a.data()[i] + b.data()[i]);
        CHECK(d.data()[i] == a.data()[i] - b.data()[i]);
    }
    Tensor twice = mul_scalar(a, scalar(2));
    Tensor sq = square(a);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(twice.data()[i] == scalar(2) * a.data()[i]);
        CHECK(sq.data()[i] == a.data()[i] * a.data()[i]);
    }
    CHECK_THROWS_AS(add(a, random_tensor({2, 2}, rng)), DimensionError);
}

TEST_CASE("backward: linear and quadratic analytic gradients") {
    std::mt19937_64 rng(21);
    Tensor x = random_tensor({2, 5}, rng, -1.0, 1.0, /*requires_grad=*/true);
    {
        Graph g;
        backward(sum(x));
    }
    for (std::size_t i = 0; i < 10; ++i) CHECK(x.grad()[i] == scalar(1));

    Tensor y = random_tensor({2, 5}, rng, -1.0, 1.0, /*requires_grad=*/true);
    {
        Graph g;
        backward(sum(square(y)));
    }
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(y.grad()[i] == doctest::Approx(2.0 * y.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("backward: fan-out accumulates gradients additively") {
    std::mt19937_64 rng(22);
    Tensor x1 = random_tensor({3, 3}, rng, -1.0, 1.0, true);
    Tensor x2 = Tensor::from_data({3, 3},
                                  std::vector<scalar>(x1.data().begin(), x1.data().end()), true);
    {
        Graph g;
        backward(add(sum(square(x1)), sum(square(x1))));
    }
    {
        Graph g;
        backward(sum(square(x2)));
    }
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(x1.grad()[i] == doctest::Approx(2.0 * x2.grad()[i]).epsilon(1e-6));
    }
}

TEST_CASE("backward: rejects non-scalar losses and runs only under a live graph") {
    std::mt19937_64 rng(23);
    Tensor x = random_tensor({2, 2}, rng, -1.0, 1.0, true);
    {
        Graph g;
        Tensor y = square(x);
        CHECK_THROWS_AS(backward(y), UsageError);
    }
    Tensor loss = sum(square(x));  // no active graph: forward-only
    CHECK_THROWS_AS(backward(loss), UsageError);
}

TEST_CASE("determinism: identical inputs give bit-identical outputs and gradients") {
    auto run = [] {
        std::mt19937_64 rng(24);
        Tensor x = random_tensor({1, 2, 6, 6}, rng, -1.0, 1.0, true);
        Tensor w = random_tensor({3, 2, 3, 3}, rng, -1.0, 1.0, true);
        Tensor b = random_tensor({3}, rng, -1.0, 1.0, true);
        Tensor out;
        {
            Graph g;
            out = conv2d(relu(x), w, b, 1, 1);
            backward(mean(square(out)));
        }
        std::vector<scalar> bytes(out.data().begin(), out.data().end());
        bytes.insert(bytes.end(), x.grad().begin(), x.grad().end());
        bytes.insert(bytes.end(), w.grad().begin(), w.grad().end());
        bytes.insert(bytes.end(), b.grad().begin(), b.grad().end());
        return bytes;
    };
    CHECK(run() == run());
}

TEST_CASE("finite checks: a non-finite op output is rejected when enabled") {
    set_finite_checks(true);
    Tensor big = Tensor::full({4}, std::numeric_limits<scalar>::max());
    CHECK_THROWS_AS(square(big), Error);  // overflows to +inf
    set_finite_checks(false);
    Tensor sq = square(big);
    CHECK(std::isinf(static_cast<double>(sq.data()[0])));
}
