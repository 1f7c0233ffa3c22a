#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nusr/tensor.hpp"

namespace nusr {

struct MetricConfig {
    // Peak signal for PSNR. When unset, the ground-truth value range is used.
    std::optional<double> psnr_peak;
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    // Dynamic range L for SSIM. When unset, the ground-truth range is used.
    std::optional<double> ssim_dynamic_range;

    void validate() const;
};

// 10 * log10(peak^2 / MSE), computed in double regardless of the tensor
// scalar type. Returns +infinity for a perfect reconstruction.
double psnr(const Tensor& test, const Tensor& reference, const MetricConfig& cfg = {});

// Mean SSIM over valid (fully interior) windows of a Gaussian-weighted
// 11x11 neighbourhood, computed in double.
double ssim(const Tensor& test, const Tensor& reference, const MetricConfig& cfg = {});

struct MethodScores {
    std::string method;
    std::vector<double> psnr_values;
    std::vector<double> ssim_values;
};

struct MethodSummary {
    std::string method;
    std::int64_t n = 0;
    double psnr_mean = 0.0;
    double psnr_std = 0.0;
    double ssim_mean = 0.0;
    double ssim_std = 0.0;
    std::int64_t psnr_infinite_count = 0;  // excluded from mean/std
};

struct EvalReport {
    std::vector<MethodSummary> rows;  // sorted by method name

    std::string to_csv() const;
};

// Aggregates per-image scores into summary rows. Infinite PSNR values are
// dropped from the mean/std and counted separately; std is the population
// standard deviation.
EvalReport summarize(const std::vector<MethodScores>& scores);

}  // namespace nusr
