#include "nusr/degrade.hpp"

#include <algorithm>
#include <cmath>

#include "nusr/ops.hpp"
#include "nusr/rng.hpp"

namespace nusr {

void AugmentSpec::validate() const {
    if (rotation_max_deg < 0) throw UsageError("augment rotation_max_deg must be >= 0");
    if (translate_frac < 0) throw UsageError("augment translate_frac must be >= 0");
    if (scale_lo <= 0 || scale_hi <= 0 || scale_lo > scale_hi) {
        throw UsageError("augment scale range must be positive with lo <= hi");
    }
    if (blur_sigma_max < 0) throw UsageError("augment blur_sigma_max must be >= 0");
    if (crop_frac <= 0 || crop_frac > 1) throw UsageError("augment crop_frac must be in (0, 1]");
}

std::int64_t derive_intermediate_dim(std::int64_t n, double factor) {
    std::int64_t d = std::llround(static_cast<double>(n) / factor);
    if (d < 2) d = 2;
    if (d % 2 != 0) d += 1;
    return d;
}

void DegradeSpec::validate() const {
    if (factor_horizontal < 1.0 || factor_vertical < 1.0) {
        throw UsageError("degrade factors must be >= 1");
    }
    if (output_width < 8 || output_height < 8) throw UsageError("output dims must be >= 8");
    if (!(normalize_lo < normalize_hi)) throw UsageError("normalize range must satisfy lo < hi");
    if (intermediate_width && *intermediate_width < 2) throw UsageError("intermediate width must be >= 2");
    if (intermediate_height && *intermediate_height < 2) throw UsageError("intermediate height must be >= 2");
    if (augment) augment->validate();
}

std::int64_t DegradeSpec::derived_intermediate_width() const {
    return intermediate_width ? *intermediate_width
                              : derive_intermediate_dim(output_width, factor_horizontal);
}

std::int64_t DegradeSpec::derived_intermediate_height() const {
    return intermediate_height ? *intermediate_height
                               : derive_intermediate_dim(output_height, factor_vertical);
}

Tensor make_image(std::int64_t height, std::int64_t width, std::vector<scalar> data) {
    return Tensor::from_data({1, 1, height, width}, std::move(data));
}

namespace {

void require_image(const Tensor& t, const char* what) {
    if (t.ndim() != 4 || t.dim(0) != 1 || t.dim(1) != 1) {
        throw DimensionError(std::string(what) + " must be a [1,1,H,W] tensor, got " +
                             shape_str(t.shape()));
    }
}

// Bilinear sample at fractional (sx, sy), coordinates clamped to the image.
double sample_bilinear(const scalar* img, std::int64_t h, std::int64_t w, double sy, double sx) {
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
    const std::int64_t x1 = std::min(x0 + 1, w - 1);
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double fx = sx - static_cast<double>(x0);
    const double fy = sy - static_cast<double>(y0);
    const double v00 = img[y0 * w + x0], v01 = img[y0 * w + x1];
    const double v10 = img[y1 * w + x0], v11 = img[y1 * w + x1];
    const double top = v00 + fx * (v01 - v00);
    const double bot = v10 + fx * (v11 - v10);
    return top + fy * (bot - top);
}

Tensor resample(const Tensor& image, std::int64_t out_w, std::int64_t out_h) {
    const std::int64_t h = image.dim(2), w = image.dim(3);
    if (out_w == w && out_h == h) {
        return make_image(h, w, std::vector<scalar>(image.data().begin(), image.data().end()));
    }
    const double sx_scale = static_cast<double>(w) / static_cast<double>(out_w);
    const double sy_scale = static_cast<double>(h) / static_cast<double>(out_h);
    std::vector<scalar> out(static_cast<std::size_t>(out_w * out_h));
    const scalar* src = image.data().data();
    for (std::int64_t y = 0; y < out_h; ++y) {
        const double sy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
        for (std::int64_t x = 0; x < out_w; ++x) {
            const double sx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
            out[static_cast<std::size_t>(y * out_w + x)] =
                static_cast<scalar>(sample_bilinear(src, h, w, sy, sx));
        }
    }
    return make_image(out_h, out_w, std::move(out));
}

}  // namespace

std::pair<Tensor, NormParams> normalize(const Tensor& image, double lo, double hi) {
    require_image(image, "normalize input");
    if (!(lo < hi)) throw UsageError("normalize range must satisfy lo < hi");
    double mn = image.data()[0], mx = image.data()[0];
    for (scalar v : image.data()) {
        mn = std::min(mn, static_cast<double>(v));
        mx = std::max(mx, static_cast<double>(v));
    }
    if (mx <= mn) {
        throw DegenerateRangeError("cannot normalize a constant image (min == max == " +
                                   std::to_string(mn) + ")");
    }
    const double scale = (hi - lo) / (mx - mn);
    std::vector<scalar> out(image.data().size());
    const scalar* src = image.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<scalar>(lo + (static_cast<double>(src[i]) - mn) * scale);
    }
    return {make_image(image.dim(2), image.dim(3), std::move(out)),
            NormParams{mn, mx, lo, hi}};
}

Tensor denormalize(const Tensor& image, const NormParams& params) {
    require_image(image, "denormalize input");
    std::vector<scalar> out(image.data().size());
    const scalar* src = image.data().data();
    if (params.degenerate()) {
        std::fill(out.begin(), out.end(), static_cast<scalar>(params.in_min));
    } else {
        const double scale = (params.in_max - params.in_min) / (params.hi - params.lo);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = static_cast<scalar>(params.in_min +
                                         (static_cast<double>(src[i]) - params.lo) * scale);
        }
    }
    return make_image(image.dim(2), image.dim(3), std::move(out));
}

Tensor bilinear_resize(const Tensor& image, std::int64_t target_width, std::int64_t target_height) {
    require_image(image, "bilinear_resize input");
    if (target_width < 1 || target_height < 1) {
        throw DimensionError("bilinear_resize target dims must be >= 1");
    }
    if (image.dim(2) < 2 || image.dim(3) < 2) {
        throw DimensionError("bilinear_resize source must be at least 2x2");
    }
    return resample(image, target_width, target_height);
}

Tensor downsample(const Tensor& image, const DegradeSpec& spec) {
    require_image(image, "downsample input");
    const std::int64_t tw = spec.derived_intermediate_width();
    const std::int64_t th = spec.derived_intermediate_height();
    if (tw > image.dim(3) || th > image.dim(2)) {
        throw DimensionError("intermediate dims " + std::to_string(tw) + "x" + std::to_string(th) +
                             " exceed input " + std::to_string(image.dim(3)) + "x" +
                             std::to_string(image.dim(2)));
    }
    return resample(image, tw, th);
}

Tensor warp_affine(const Tensor& image, double angle_deg, double translate_x_px,
                   double translate_y_px, double scale) {
    require_image(image, "warp_affine input");
    if (angle_deg == 0.0 && translate_x_px == 0.0 && translate_y_px == 0.0 && scale == 1.0) {
        return make_image(image.dim(2), image.dim(3),
                          std::vector<scalar>(image.data().begin(), image.data().end()));
    }
    const std::int64_t h = image.dim(2), w = image.dim(3);
    const double theta = angle_deg * M_PI / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cx = static_cast<double>(w - 1) / 2.0;
    const double cy = static_cast<double>(h - 1) / 2.0;
    std::vector<scalar> out(image.data().size());
    const scalar* src = image.data().data();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            // invert translate, then rotation+scale about the center
            const double px = static_cast<double>(x) - cx - translate_x_px;
            const double py = static_cast<double>(y) - cy - translate_y_px;
            const double sx = (ct * px + st * py) / scale + cx;
            const double sy = (-st * px + ct * py) / scale + cy;
            out[static_cast<std::size_t>(y * w + x)] =
                static_cast<scalar>(sample_bilinear(src, h, w, sy, sx));
        }
    }
    return make_image(h, w, std::move(out));
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
    require_image(image, "gaussian_blur input");
    if (sigma <= 0.0) {
        return make_image(image.dim(2), image.dim(3),
                          std::vector<scalar>(image.data().begin(), image.data().end()));
    }
    const std::int64_t h = image.dim(2), w = image.dim(3);
    const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        norm += v;
    }
    for (auto& k : kernel) k /= norm;

    const scalar* src = image.data().data();
    std::vector<double> tmp(static_cast<std::size_t>(h * w));
    // horizontal pass, replicate borders
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                const std::int64_t xi = std::clamp(x + i, std::int64_t(0), w - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * src[y * w + xi];
            }
            tmp[static_cast<std::size_t>(y * w + x)] = acc;
        }
    }
    std::vector<scalar> out(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                const std::int64_t yi = std::clamp(y + i, std::int64_t(0), h - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[yi * w + x];
            }
            out[static_cast<std::size_t>(y * w + x)] = static_cast<scalar>(acc);
        }
    }
    return make_image(h, w, std::move(out));
}

Tensor crop_resize(const Tensor& image, std::int64_t x0, std::int64_t y0,
                   std::int64_t crop_width, std::int64_t crop_height) {
    require_image(image, "crop_resize input");
    const std::int64_t h = image.dim(2), w = image.dim(3);
    if (crop_width < 2 || crop_height < 2 || x0 < 0 || y0 < 0 || x0 + crop_width > w ||
        y0 + crop_height > h) {
        throw DimensionError("crop window out of bounds");
    }
    if (crop_width == w && crop_height == h) {
        return make_image(h, w, std::vector<scalar>(image.data().begin(), image.data().end()));
    }
    std::vector<scalar> cropped(static_cast<std::size_t>(crop_width * crop_height));
    const scalar* src = image.data().data();
    for (std::int64_t y = 0; y < crop_height; ++y) {
        std::copy(src + (y0 + y) * w + x0, src + (y0 + y) * w + x0 + crop_width,
                  cropped.begin() + y * crop_width);
    }
    return resample(make_image(crop_height, crop_width, std::move(cropped)), w, h);
}

Tensor augment(const Tensor& hf, const AugmentSpec& spec, std::mt19937_64& rng) {
    require_image(hf, "augment input");
    spec.validate();
    const std::int64_t h = hf.dim(2), w = hf.dim(3);

    // fixed draw order so a replayed rng reproduces the transform bit-exactly
    const double angle = rand_range(rng, -spec.rotation_max_deg, spec.rotation_max_deg);
    const double tx = rand_range(rng, -spec.translate_frac, spec.translate_frac) *
                      static_cast<double>(w);
    const double ty = rand_range(rng, -spec.translate_frac, spec.translate_frac) *
                      static_cast<double>(h);
    const double scale = rand_range(rng, spec.scale_lo, spec.scale_hi);
    const double sigma = rand_range(rng, 0.0, spec.blur_sigma_max);
    const double area = rand_range(rng, spec.crop_frac, 1.0);
    const double side = std::sqrt(area);
    std::int64_t cw = std::clamp<std::int64_t>(std::llround(side * static_cast<double>(w)), 2, w);
    std::int64_t ch = std::clamp<std::int64_t>(std::llround(side * static_cast<double>(h)), 2, h);
    const std::int64_t x0 = cw < w ? rand_index(rng, w - cw + 1) : 0;
    const std::int64_t y0 = ch < h ? rand_index(rng, h - ch + 1) : 0;

    Tensor out = warp_affine(hf, angle, tx, ty, scale);
    out = gaussian_blur(out, sigma);
    out = crop_resize(out, x0, y0, cw, ch);
    return out;
}

PairedSample make_pair(const Tensor& hf_raw, const DegradeSpec& spec, std::mt19937_64& rng) {
    require_image(hf_raw, "make_pair input");
    spec.validate();
    if (hf_raw.dim(3) != spec.output_width || hf_raw.dim(2) != spec.output_height) {
        throw DimensionError("make_pair input dims " + std::to_string(hf_raw.dim(3)) + "x" +
                             std::to_string(hf_raw.dim(2)) + " must equal spec output dims " +
                             std::to_string(spec.output_width) + "x" +
                             std::to_string(spec.output_height));
    }

    Tensor hf;
    double mn = hf_raw.data()[0], mx = hf_raw.data()[0];
    for (scalar v : hf_raw.data()) {
        mn = std::min(mn, static_cast<double>(v));
        mx = std::max(mx, static_cast<double>(v));
    }
    if (mx <= mn) {
        // Constant image: no range to stretch; park it at the midpoint so the
        // degradation maps it to itself and the residual is exactly zero.
        hf = Tensor::full(hf_raw.shape(),
                          static_cast<scalar>((spec.normalize_lo + spec.normalize_hi) / 2.0));
    } else {
        hf = normalize(hf_raw, spec.normalize_lo, spec.normalize_hi).first;
    }
    if (spec.augment) hf = augment(hf, *spec.augment, rng);

    Tensor lf_small = downsample(hf, spec);
    Tensor lf = bilinear_resize(lf_small, spec.output_width, spec.output_height);
    Tensor residual = sub(hf, lf);
    // Re-derive hf from (lf, residual) so hf == lf + residual holds bit-exactly
    // even where float rounding would otherwise break the identity.
    Tensor hf_exact = add(lf, residual);

    return PairedSample{hf_exact, lf, residual};
}

}  // namespace nusr
