#pragma once

#include <optional>
#include <random>

#include "nusr/tensor.hpp"

namespace nusr {

// Paired geometric/photometric jitter applied to the high-quality image before
// degradation, so input and target stay aligned. A magnitude of zero (or a
// unit scale range / full crop) disables the corresponding transform.
struct AugmentSpec {
    double rotation_max_deg = 10.0;
    double translate_frac = 0.05;
    double scale_lo = 0.95;
    double scale_hi = 1.05;
    double blur_sigma_max = 1.0;
    double crop_frac = 0.90;  // minimum retained area fraction

    void validate() const;
};

// Parameters of the high-quality -> synthetic low-quality pipeline:
// asymmetric decimation followed by bilinear re-upsampling, on images
// normalized into [lo, hi].
struct DegradeSpec {
    double factor_horizontal = 1.5;  // applies to width
    double factor_vertical = 5.0;    // applies to height
    std::optional<std::int64_t> intermediate_width;
    std::optional<std::int64_t> intermediate_height;
    std::int64_t output_width = 256;
    std::int64_t output_height = 256;
    double normalize_lo = -0.5;
    double normalize_hi = 0.5;
    std::optional<AugmentSpec> augment;
    std::uint64_t seed = 0;

    void validate() const;
    // Derived decimation target: round(n / factor), then up to the nearest
    // even integer. 256/1.5 -> 172, 256/5 -> 52.
    std::int64_t derived_intermediate_width() const;
    std::int64_t derived_intermediate_height() const;
};

std::int64_t derive_intermediate_dim(std::int64_t n, double factor);

// Recorded min/max of a normalization so it can be inverted exactly.
struct NormParams {
    double in_min = 0.0;
    double in_max = 1.0;
    double lo = -0.5;
    double hi = 0.5;
    bool degenerate() const { return in_max <= in_min; }
};

// One training sample. hf == lf_bilinear + residual_target holds bit-exactly
// by construction.
struct PairedSample {
    Tensor hf;
    Tensor lf_bilinear;
    Tensor residual_target;
};

// --- image helpers (all take/return [1,1,H,W] tensors) ---

Tensor make_image(std::int64_t height, std::int64_t width, std::vector<scalar> data);
inline scalar image_at(const Tensor& img, std::int64_t y, std::int64_t x) {
    return img.data()[static_cast<std::size_t>(y * img.dim(3) + x)];
}

// Affine map of min->lo, max->hi. Throws DegenerateRangeError on a constant
// image.
std::pair<Tensor, NormParams> normalize(const Tensor& image, double lo, double hi);
Tensor denormalize(const Tensor& image, const NormParams& params);

// Bilinear resampling with half-pixel centers:
//   src = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped to borders.
Tensor bilinear_resize(const Tensor& image, std::int64_t target_width, std::int64_t target_height);

// Decimation to the spec's intermediate dims (bilinear sampling, same kernel
// as the upsampler).
Tensor downsample(const Tensor& image, const DegradeSpec& spec);

// Deterministic warp/blur/crop primitives used by augment(); exposed so exact
// parameter values can be driven directly.
Tensor warp_affine(const Tensor& image, double angle_deg, double translate_x_px,
                   double translate_y_px, double scale);
Tensor gaussian_blur(const Tensor& image, double sigma);
Tensor crop_resize(const Tensor& image, std::int64_t x0, std::int64_t y0,
                   std::int64_t crop_width, std::int64_t crop_height);

// Samples one transform instance from spec (fixed draw order: angle,
// translate x/y, scale, blur sigma, crop) and applies it.
Tensor augment(const Tensor& hf, const AugmentSpec& spec, std::mt19937_64& rng);

// Full pipeline: normalize -> augment -> downsample -> bilinear upsample ->
// residual assembly. Constant images are mapped to the midpoint of the
// normalization range instead of failing, so they degrade to themselves.
PairedSample make_pair(const Tensor& hf_raw, const DegradeSpec& spec, std::mt19937_64& rng);

}  // namespace nusr
