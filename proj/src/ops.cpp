#include "nusr/ops.hpp"

#include <algorithm>
#include <cmath>

namespace nusr {

namespace {

void require_ndim(const Tensor& t, std::size_t nd, const char* what) {
    if (t.ndim() != nd) {
        throw DimensionError(std::string(what) + " must be " + std::to_string(nd) +
                             "-d, got shape " + shape_str(t.shape()));
    }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!Graph::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

// Marks the output differentiable and pushes the backward closure.
void record(Tensor& out, std::function<void()> back) {
    out.set_requires_grad(true);
    Graph::active()->record(std::move(back));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::int64_t padding, std::int64_t stride) {
    require_ndim(input, 4, "conv2d input");
    require_ndim(weight, 4, "conv2d weight");
    require_ndim(bias, 1, "conv2d bias");
    const std::int64_t n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t c_out = weight.dim(0), k_h = weight.dim(2), k_w = weight.dim(3);
    if (weight.dim(1) != c_in) {
        throw DimensionError("conv2d channel mismatch: input has " + std::to_string(c_in) +
                             " channels, weight expects " + std::to_string(weight.dim(1)));
    }
    if (bias.dim(0) != c_out) throw DimensionError("conv2d bias size must equal output channels");
    if (k_h % 2 == 0 || k_w % 2 == 0) throw DimensionError("conv2d kernel dims must be odd");
    if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
    if (padding < 0) throw DimensionError("conv2d padding must be >= 0");
    if (h + 2 * padding < k_h || w + 2 * padding < k_w) {
        throw DimensionError("conv2d input too small for kernel");
    }
    const std::int64_t h_out = (h + 2 * padding - k_h) / stride + 1;
    const std::int64_t w_out = (w + 2 * padding - k_w) / stride + 1;

    Tensor out = Tensor::zeros({n_batch, c_out, h_out, w_out});
    const scalar* in_p = input.data().data();
    const scalar* w_p = weight.data().data();
    const scalar* b_p = bias.data().data();
    scalar* out_p = out.data_mut().data();

    for (std::int64_t n = 0; n < n_batch; ++n) {
        for (std::int64_t co = 0; co < c_out; ++co) {
            scalar* out_plane = out_p + ((n * c_out + co) * h_out) * w_out;
            std::fill(out_plane, out_plane + h_out * w_out, b_p[co]);
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                const scalar* in_plane = in_p + ((n * c_in + ci) * h) * w;
                const scalar* w_k = w_p + ((co * c_in + ci) * k_h) * k_w;
                for (std::int64_t oh = 0; oh < h_out; ++oh) {
                    scalar* out_row = out_plane + oh * w_out;
                    for (std::int64_t r = 0; r < k_h; ++r) {
                        const std::int64_t ih = oh * stride - padding + r;
                        if (ih < 0 || ih >= h) continue;
                        const scalar* in_row = in_plane + ih * w;
                        for (std::int64_t c = 0; c < k_w; ++c) {
                            const scalar wv = w_k[r * k_w + c];
                            // valid ow range for this kernel column
                            std::int64_t ow_lo = 0, ow_hi = w_out;
                            while (ow_lo < w_out && ow_lo * stride - padding + c < 0) ++ow_lo;
                            while (ow_hi > ow_lo && (ow_hi - 1) * stride - padding + c >= w) --ow_hi;
                            const scalar* src = in_row - padding + c;
                            if (stride == 1) {
                                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    out_row[ow] += wv * src[ow];
                                }
                            } else {
                                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    out_row[ow] += wv * src[ow * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    check_finite(out, "conv2d");

    if (should_record({&input, &weight, &bias})) {
        auto in_i = input.impl();
        auto w_i = weight.impl();
        auto b_i = bias.impl();
        auto out_i = out.impl();
        record(out, [=]() {
            if (out_i->grad.empty()) return;
            const scalar* go = out_i->grad.data();
            const bool need_in = in_i->requires_grad;
            const bool need_w = w_i->requires_grad;
            const bool need_b = b_i->requires_grad;
            if (need_in && in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), scalar(0));
            if (need_w && w_i->grad.empty()) w_i->grad.assign(w_i->data.size(), scalar(0));
            if (need_b && b_i->grad.empty()) b_i->grad.assign(b_i->data.size(), scalar(0));
            const scalar* in_p = in_i->data.data();
            const scalar* w_p = w_i->data.data();
            for (std::int64_t n = 0; n < n_batch; ++n) {
                for (std::int64_t co = 0; co < c_out; ++co) {
                    const scalar* go_plane = go + ((n * c_out + co) * h_out) * w_out;
                    if (need_b) {
                        scalar acc = 0;
                        for (std::int64_t i = 0; i < h_out * w_out; ++i) acc += go_plane[i];
                        b_i->grad[static_cast<std::size_t>(co)] += acc;
                    }
                    if (!need_in && !need_w) continue;
                    for (std::int64_t ci = 0; ci < c_in; ++ci) {
                        const scalar* in_plane = in_p + ((n * c_in + ci) * h) * w;
                        scalar* gin_plane = need_in ? in_i->grad.data() + ((n * c_in + ci) * h) * w : nullptr;
                        const scalar* w_k = w_p + ((co * c_in + ci) * k_h) * k_w;
                        scalar* gw_k = need_w ? w_i->grad.data() + ((co * c_in + ci) * k_h) * k_w : nullptr;
                        for (std::int64_t oh = 0; oh < h_out; ++oh) {
                            const scalar* go_row = go_plane + oh * w_out;
                            for (std::int64_t r = 0; r < k_h; ++r) {
                                const std::int64_t ih = oh * stride - padding + r;
                                if (ih < 0 || ih >= h) continue;
                                for (std::int64_t c = 0; c < k_w; ++c) {
                                    std::int64_t ow_lo = 0, ow_hi = w_out;
                                    while (ow_lo < w_out && ow_lo * stride - padding + c < 0) ++ow_lo;
                                    while (ow_hi > ow_lo && (ow_hi - 1) * stride - padding + c >= w) --ow_hi;
                                    if (need_in) {
                                        const scalar wv = w_k[r * k_w + c];
                                        scalar* dst = gin_plane + ih * w - padding + c;
                                        for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                            dst[ow * stride] += wv * go_row[ow];
                                        }
                                    }
                                    if (need_w) {
                                        const scalar* src = in_plane + ih * w - padding + c;
                                        scalar acc = 0;
                                        for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) {
                                            acc += go_row[ow] * src[ow * stride];
                                        }
                                        gw_k[r * k_w + c] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::int64_t stride) {
    require_ndim(input, 4, "conv_transpose2d input");
    require_ndim(weight, 4, "conv_transpose2d weight");
    require_ndim(bias, 1, "conv_transpose2d bias");
    if (stride != 2 || weight.dim(2) != 2 || weight.dim(3) != 2) {
        throw UsageError("conv_transpose2d supports only 2x2 kernels with stride 2");
    }
    const std::int64_t n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t c_out = weight.dim(1);
    if (weight.dim(0) != c_in) {
        throw DimensionError("conv_transpose2d channel mismatch: input has " + std::to_string(c_in) +
                             " channels, weight expects " + std::to_string(weight.dim(0)));
    }
    if (bias.dim(0) != c_out) throw DimensionError("conv_transpose2d bias size must equal output channels");
    const std::int64_t h_out = 2 * h, w_out = 2 * w;

    Tensor out = Tensor::zeros({n_batch, c_out, h_out, w_out});
    const scalar* in_p = input.data().data();
    const scalar* w_p = weight.data().data();
    const scalar* b_p = bias.data().data();
    scalar* out_p = out.data_mut().data();

    // With k == stride == 2 every output pixel has exactly one source pixel:
    // out[n,co,oh,ow] = bias[co] + sum_ci in[n,ci,oh/2,ow/2] * w[ci,co,oh%2,ow%2]
    for (std::int64_t n = 0; n < n_batch; ++n) {
        for (std::int64_t co = 0; co < c_out; ++co) {
            scalar* out_plane = out_p + ((n * c_out + co) * h_out) * w_out;
            std::fill(out_plane, out_plane + h_out * w_out, b_p[co]);
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                const scalar* in_plane = in_p + ((n * c_in + ci) * h) * w;
                const scalar* w_k = w_p + ((ci * c_out + co) * 2) * 2;
                for (std::int64_t oh = 0; oh < h_out; ++oh) {
                    const scalar* in_row = in_plane + (oh >> 1) * w;
                    const scalar w0 = w_k[(oh & 1) * 2], w1 = w_k[(oh & 1) * 2 + 1];
                    scalar* out_row = out_plane + oh * w_out;
                    for (std::int64_t iw = 0; iw < w; ++iw) {
                        const scalar v = in_row[iw];
                        out_row[2 * iw] += w0 * v;
                        out_row[2 * iw + 1] += w1 * v;
                    }
                }
            }
        }
    }
    check_finite(out, "conv_transpose2d");

    if (should_record({&input, &weight, &bias})) {
        auto in_i = input.impl();
        auto w_i = weight.impl();
        auto b_i = bias.impl();
        auto out_i = out.impl();
        record(out, [=]() {
            if (out_i->grad.empty()) return;
            const scalar* go = out_i->grad.data();
            const bool need_in = in_i->requires_grad;
            const bool need_w = w_i->requires_grad;
            const bool need_b = b_i->requires_grad;
            if (need_in && in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), scalar(0));
            if (need_w && w_i->grad.empty()) w_i->grad.assign(w_i->data.size(), scalar(0));
            if (need_b && b_i->grad.empty()) b_i->grad.assign(b_i->data.size(), scalar(0));
            const scalar* in_p = in_i->data.data();
            const scalar* w_p = w_i->data.data();
            for (std::int64_t n = 0; n < n_batch; ++n) {
                for (std::int64_t co = 0; co < c_out; ++co) {
                    const scalar* go_plane = go + ((n * c_out + co) * h_out) * w_out;
                    if (need_b) {
                        scalar acc = 0;
                        for (std::int64_t i = 0; i < h_out * w_out; ++i) acc += go_plane[i];
                        b_i->grad[static_cast<std::size_t>(co)] += acc;
                    }
                    if (!need_in && !need_w) continue;
                    for (std::int64_t ci = 0; ci < c_in; ++ci) {
                        const scalar* in_plane = in_p + ((n * c_in + ci) * h) * w;
                        scalar* gin_plane = need_in ? in_i->grad.data() + ((n * c_in + ci) * h) * w : nullptr;
                        const scalar* w_k = w_p + ((ci * c_out + co) * 2) * 2;
                        scalar* gw_k = need_w ? w_i->grad.data() + ((ci * c_out + co) * 2) * 2 : nullptr;
                        for (std::int64_t oh = 0; oh < h_out; ++oh) {
                            const scalar* go_row = go_plane + oh * w_out;
                            const std::int64_t ih = oh >> 1, kr = oh & 1;
                            const scalar* in_row = in_plane + ih * w;
                            scalar* gin_row = need_in ? gin_plane + ih * w : nullptr;
                            const scalar w0 = w_k[kr * 2], w1 = w_k[kr * 2 + 1];
                            scalar acc0 = 0, acc1 = 0;
                            for (std::int64_t iw = 0; iw < w; ++iw) {
                                const scalar g0 = go_row[2 * iw], g1 = go_row[2 * iw + 1];
                                if (need_in) gin_row[iw] += w0 * g0 + w1 * g1;
                                if (need_w) {
                                    const scalar v = in_row[iw];
                                    acc0 += v * g0;
                                    acc1 += v * g1;
                                }
                            }
                            if (need_w) {
                                gw_k[kr * 2] += acc0;
                                gw_k[kr * 2 + 1] += acc1;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor maxpool2d(const Tensor& input) {
    require_ndim(input, 4, "maxpool2d input");
    const std::int64_t n_batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("maxpool2d requires even H and W, got " + shape_str(input.shape()));
    }
    const std::int64_t h_out = h / 2, w_out = w / 2;
    Tensor out = Tensor::zeros({n_batch, c, h_out, w_out});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    const scalar* in_p = input.data().data();
    scalar* out_p = out.data_mut().data();

    std::int64_t o = 0;
    for (std::int64_t nc = 0; nc < n_batch * c; ++nc) {
        const scalar* plane = in_p + nc * h * w;
        for (std::int64_t oh = 0; oh < h_out; ++oh) {
            for (std::int64_t ow = 0; ow < w_out; ++ow, ++o) {
                const std::int64_t base = (2 * oh) * w + 2 * ow;
                // row-major window order; strict > keeps the first maximum
                std::int64_t best = base;
                scalar bv = plane[base];
                const std::int64_t cand[3] = {base + 1, base + w, base + w + 1};
                for (std::int64_t idx : cand) {
                    if (plane[idx] > bv) {
                        bv = plane[idx];
                        best = idx;
                    }
                }
                out_p[o] = bv;
                argmax[static_cast<std::size_t>(o)] = nc * h * w + best;
            }
        }
    }
    check_finite(out, "maxpool2d");

    if (should_record({&input})) {
        auto in_i = input.impl();
        auto out_i = out.impl();
        record(out, [in_i, out_i, argmax = std::move(argmax)]() {
            if (out_i->grad.empty() || !in_i->requires_grad) return;
            if (in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), scalar(0));
            const scalar* go = out_i->grad.data();
            for (std::size_t i = 0; i < argmax.size(); ++i) {
                in_i->grad[static_cast<std::size_t>(argmax[i])] += go[i];
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& input) {
    Tensor out = Tensor::zeros(input.shape());
    const scalar* in_p = input.data().data();
    scalar* out_p = out.data_mut().data();
    const std::int64_t n = input.numel();
    for (std::int64_t i = 0; i < n; ++i) out_p[i] = in_p[i] > scalar(0) ? in_p[i] : scalar(0);
    check_finite(out, "relu");

    if (should_record({&input})) {
        auto in_i = input.impl();
        auto out_i = out.impl();
        record(out, [in_i, out_i]() {
            if (out_i->grad.empty() || !in_i->requires_grad) return;
            if (in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), scalar(0));
            const scalar* go = out_i->grad.data();
            for (std::size_t i = 0; i < in_i->data.size(); ++i) {
                if (in_i->data[i] > scalar(0)) in_i->grad[i] += go[i];
            }
        });
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw UsageError("concat_channels needs at least one input");
    for (const Tensor& t : inputs) require_ndim(t, 4, "concat_channels input");
    const std::int64_t n_batch = inputs[0].dim(0), h = inputs[0].dim(2), w = inputs[0].dim(3);
    std::int64_t c_total = 0;
    for (const Tensor& t : inputs) {
        if (t.dim(0) != n_batch || t.dim(2) != h || t.dim(3) != w) {
            throw DimensionError("concat_channels inputs must share batch and spatial dims: " +
                                 shape_str(inputs[0].shape()) + " vs " + shape_str(t.shape()));
        }
        c_total += t.dim(1);
    }
    Tensor out = Tensor::zeros({n_batch, c_total, h, w});
    scalar* out_p = out.data_mut().data();
    const std::int64_t plane = h * w;
    std::int64_t c_off = 0;
    for (const Tensor& t : inputs) {
        const scalar* src = t.data().data();
        const std::int64_t c = t.dim(1);
        for (std::int64_t n = 0; n < n_batch; ++n) {
            std::copy(src + n * c * plane, src + (n + 1) * c * plane,
                      out_p + (n * c_total + c_off) * plane);
        }
        c_off += c;
    }

    bool rec = Graph::active() != nullptr &&
               std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (rec) {
        std::vector<std::shared_ptr<TensorImpl>> in_impls;
        in_impls.reserve(inputs.size());
        for (const Tensor& t : inputs) in_impls.push_back(t.impl());
        auto out_i = out.impl();
        record(out, [in_impls = std::move(in_impls), out_i, n_batch, c_total, plane]() {
            if (out_i->grad.empty()) return;
            const scalar* go = out_i->grad.data();
            std::int64_t c_off = 0;
            for (auto& in_i : in_impls) {
                const std::int64_t c = in_i->shape[1];
                if (in_i->requires_grad) {
                    if (in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), scalar(0));
                    for (std::int64_t n = 0; n < n_batch; ++n) {
                        const scalar* src = go + (n * c_total + c_off) * plane;
                        scalar* dst = in_i->grad.data() + n * c * plane;
                        for (std::int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                    }
                }
                c_off += c;
            }
        });
    }
    return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const scalar* ap = a.data().data();
    const scalar* bp = b.data().data();
    scalar* op = out.data_mut().data();
    for (std::int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] + bp[i];
    check_finite(out, "add");
    if (should_record({&a, &b})) {
        auto a_i = a.impl(), b_i = b.impl(), out_i = out.impl();
        record(out, [a_i, b_i, out_i]() {
            if (out_i->grad.empty()) return;
            if (a_i->requires_grad) {
                if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
                for (std::size_t i = 0; i < a_i->grad.size(); ++i) a_i->grad[i] += out_i->grad[i];
            }
            if (b_i->requires_grad) {
                if (b_i->grad.empty()) b_i->grad.assign(b_i->data.size(), scalar(0));
                for (std::size_t i = 0; i < b_i->grad.size(); ++i) b_i->grad[i] += out_i->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    const scalar* ap = a.data().data();
    const scalar* bp = b.data().data();
    scalar* op = out.data_mut().data();
    for (std::int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] - bp[i];
    check_finite(out, "sub");
    if (should_record({&a, &b})) {
        auto a_i = a.impl(), b_i = b.impl(), out_i = out.impl();
        record(out, [a_i, b_i, out_i]() {
            if (out_i->grad.empty()) return;
            if (a_i->requires_grad) {
                if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
                for (std::size_t i = 0; i < a_i->grad.size(); ++i) a_i->grad[i] += out_i->grad[i];
            }
            if (b_i->requires_grad) {
                if (b_i->grad.empty()) b_i->grad.assign(b_i->data.size(), scalar(0));
                for (std::size_t i = 0; i < b_i->grad.size(); ++i) b_i->grad[i] -= out_i->grad[i];
            }
        });
    }
    return out;
}

Tensor mul_scalar(const Tensor& a, scalar c) {
    Tensor out = Tensor::zeros(a.shape());
    const scalar* ap = a.data().data();
    scalar* op = out.data_mut().data();
    for (std::int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] * c;
    check_finite(out, "mul_scalar");
    if (should_record({&a})) {
        auto a_i = a.impl(), out_i = out.impl();
        record(out, [a_i, out_i, c]() {
            if (out_i->grad.empty() || !a_i->requires_grad) return;
            if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
            for (std::size_t i = 0; i < a_i->grad.size(); ++i) a_i->grad[i] += c * out_i->grad[i];
        });
    }
    return out;
}

Tensor square(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const scalar* ap = a.data().data();
    scalar* op = out.data_mut().data();
    for (std::int64_t i = 0; i < a.numel(); ++i) op[i] = ap[i] * ap[i];
    check_finite(out, "square");
    if (should_record({&a})) {
        auto a_i = a.impl(), out_i = out.impl();
        record(out, [a_i, out_i]() {
            if (out_i->grad.empty() || !a_i->requires_grad) return;
            if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
            for (std::size_t i = 0; i < a_i->grad.size(); ++i) {
                a_i->grad[i] += scalar(2) * a_i->data[i] * out_i->grad[i];
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& a) {
    scalar acc = 0;
    for (scalar v : a.data()) acc += v;
    Tensor out = Tensor::from_data({1}, {acc});
    check_finite(out, "sum");
    if (should_record({&a})) {
        auto a_i = a.impl(), out_i = out.impl();
        record(out, [a_i, out_i]() {
            if (out_i->grad.empty() || !a_i->requires_grad) return;
            if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
            const scalar g = out_i->grad[0];
            for (auto& gv : a_i->grad) gv += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& a) {
    scalar acc = 0;
    for (scalar v : a.data()) acc += v;
    const scalar inv_n = scalar(1) / static_cast<scalar>(a.numel());
    Tensor out = Tensor::from_data({1}, {acc * inv_n});
    check_finite(out, "mean");
    if (should_record({&a})) {
        auto a_i = a.impl(), out_i = out.impl();
        record(out, [a_i, out_i, inv_n]() {
            if (out_i->grad.empty() || !a_i->requires_grad) return;
            if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
            const scalar g = out_i->grad[0] * inv_n;
            for (auto& gv : a_i->grad) gv += g;
        });
    }
    return out;
}

Tensor log(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const scalar* ap = a.data().data();
    scalar* op = out.data_mut().data();
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (!(ap[i] > scalar(0))) {
            throw DomainError("log requires strictly positive input, got " +
                              std::to_string(static_cast<double>(ap[i])));
        }
        op[i] = std::log(ap[i]);
    }
    check_finite(out, "log");
    if (should_record({&a})) {
        auto a_i = a.impl(), out_i = out.impl();
        record(out, [a_i, out_i]() {
            if (out_i->grad.empty() || !a_i->requires_grad) return;
            if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), scalar(0));
            for (std::size_t i = 0; i < a_i->grad.size(); ++i) {
                a_i->grad[i] += out_i->grad[i] / a_i->data[i];
            }
        });
    }
    return out;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward requires a scalar (single-element) loss tensor");
    }
    Graph* g = Graph::active();
    if (!g) throw UsageError("backward requires an active Graph");
    if (!loss.requires_grad()) {
        throw UsageError("loss was not produced by a recorded differentiable graph");
    }
    const scalar one = 1;
    loss.impl()->grad.clear();
    loss.accumulate_grad(std::span<const scalar>(&one, 1));
    g->run_backward();
}

Tensor clamp(const Tensor& a, scalar lo, scalar hi) {
    Tensor out = Tensor::zeros(a.shape());
    const scalar* ap = a.data().data();
    scalar* op = out.data_mut().data();
    for (std::int64_t i = 0; i < a.numel(); ++i) op[i] = std::clamp(ap[i], lo, hi);
    return out;
}

}  // namespace nusr
