#include "nusr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "nusr/common.hpp"

namespace nusr {

void MetricConfig::validate() const {
    if (psnr_peak && *psnr_peak <= 0.0) {
        throw DomainError("psnr peak must be positive, got " + std::to_string(*psnr_peak));
    }
    if (ssim_window < 3 || ssim_window % 2 == 0) {
        throw DomainError("ssim window must be an odd integer >= 3, got " +
                          std::to_string(ssim_window));
    }
    if (ssim_sigma <= 0.0) {
        throw DomainError("ssim sigma must be positive, got " + std::to_string(ssim_sigma));
    }
    if (ssim_dynamic_range && *ssim_dynamic_range <= 0.0) {
        throw DomainError("ssim dynamic range must be positive, got " +
                          std::to_string(*ssim_dynamic_range));
    }
}

namespace {

void check_same_shape(const Tensor& test, const Tensor& reference, const char* what) {
    if (test.shape() != reference.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch, " + shape_str(test.shape()) +
                             " vs " + shape_str(reference.shape()));
    }
    if (test.numel() == 0) {
        throw DimensionError(std::string(what) + ": empty tensors");
    }
}

double reference_range(const Tensor& reference) {
    const auto d = reference.data();
    double mn = d[0], mx = d[0];
    for (scalar v : d) {
        mn = std::min(mn, static_cast<double>(v));
        mx = std::max(mx, static_cast<double>(v));
    }
    return mx - mn;
}

}  // namespace

double psnr(const Tensor& test, const Tensor& reference, const MetricConfig& cfg) {
    cfg.validate();
    check_same_shape(test, reference, "psnr");
    double peak;
    if (cfg.psnr_peak) {
        peak = *cfg.psnr_peak;
    } else {
        peak = reference_range(reference);
        if (peak <= 0.0) {
            throw DegenerateRangeError(
                "psnr: reference image is constant; pass an explicit peak value");
        }
    }
    const auto a = test.data();
    const auto b = reference.data();
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum_sq += d * d;
    }
    const double mse = sum_sq / static_cast<double>(a.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& test, const Tensor& reference, const MetricConfig& cfg) {
    cfg.validate();
    check_same_shape(test, reference, "ssim");
    if (test.ndim() != 2 && !(test.ndim() == 4 && test.dim(0) == 1 && test.dim(1) == 1)) {
        throw DimensionError("ssim expects a 2d image or a [1,1,H,W] tensor, got " +
                             shape_str(test.shape()));
    }
    const std::int64_t h = test.dim(test.ndim() - 2);
    const std::int64_t w = test.dim(test.ndim() - 1);
    const int win = cfg.ssim_window;
    if (h < win || w < win) {
        throw DimensionError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                             " is smaller than the " + std::to_string(win) + "x" +
                             std::to_string(win) + " window");
    }

    double range;
    if (cfg.ssim_dynamic_range) {
        range = *cfg.ssim_dynamic_range;
    } else {
        range = reference_range(reference);
        if (range <= 0.0) {
            throw DegenerateRangeError(
                "ssim: reference image is constant; pass an explicit dynamic range");
        }
    }
    const double c1 = (cfg.ssim_k1 * range) * (cfg.ssim_k1 * range);
    const double c2 = (cfg.ssim_k2 * range) * (cfg.ssim_k2 * range);

    // Normalized 1d Gaussian; the 2d window is its outer product, applied
    // separably (rows then columns).
    std::vector<double> g(static_cast<std::size_t>(win));
    const int half = win / 2;
    double g_sum = 0.0;
    for (int i = 0; i < win; ++i) {
        const double x = i - half;
        g[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2.0 * cfg.ssim_sigma * cfg.ssim_sigma));
        g_sum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) v /= g_sum;

    const auto ta = test.data();
    const auto tb = reference.data();
    const std::size_t n_px = static_cast<std::size_t>(h * w);

    // The five moment maps SSIM needs: E[a], E[b], E[a^2], E[b^2], E[ab].
    std::vector<double> maps[5];
    for (auto& m : maps) m.assign(n_px, 0.0);
    for (std::size_t i = 0; i < n_px; ++i) {
        const double a = static_cast<double>(ta[i]);
        const double b = static_cast<double>(tb[i]);
        maps[0][i] = a;
        maps[1][i] = b;
        maps[2][i] = a * a;
        maps[3][i] = b * b;
        maps[4][i] = a * b;
    }

    // Valid-window filtering: output is (h - win + 1) x (w - win + 1).
    const std::int64_t oh = h - win + 1;
    const std::int64_t ow = w - win + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h * ow));
    std::vector<double> filtered[5];
    for (int m = 0; m < 5; ++m) {
        // Horizontal pass.
        for (std::int64_t r = 0; r < h; ++r) {
            const double* src = maps[m].data() + r * w;
            double* dst = tmp.data() + r * ow;
            for (std::int64_t c = 0; c < ow; ++c) {
                double acc = 0.0;
                for (int k = 0; k < win; ++k) acc += g[static_cast<std::size_t>(k)] * src[c + k];
                dst[c] = acc;
            }
        }
        // Vertical pass.
        filtered[m].assign(static_cast<std::size_t>(oh * ow), 0.0);
        for (std::int64_t r = 0; r < oh; ++r) {
            double* dst = filtered[m].data() + r * ow;
            for (int k = 0; k < win; ++k) {
                const double wk = g[static_cast<std::size_t>(k)];
                const double* src = tmp.data() + (r + k) * ow;
                for (std::int64_t c = 0; c < ow; ++c) dst[c] += wk * src[c];
            }
        }
    }

    double total = 0.0;
    const std::size_t n_win = static_cast<std::size_t>(oh * ow);
    for (std::size_t i = 0; i < n_win; ++i) {
        const double mu_a = filtered[0][i];
        const double mu_b = filtered[1][i];
        const double var_a = filtered[2][i] - mu_a * mu_a;
        const double var_b = filtered[3][i] - mu_b * mu_b;
        const double cov = filtered[4][i] - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    return total / static_cast<double>(n_win);
}

EvalReport summarize(const std::vector<MethodScores>& scores) {
    EvalReport report;
    for (const auto& s : scores) {
        if (s.psnr_values.size() != s.ssim_values.size()) {
            throw DimensionError("summarize: method '" + s.method + "' has " +
                                 std::to_string(s.psnr_values.size()) + " psnr values but " +
                                 std::to_string(s.ssim_values.size()) + " ssim values");
        }
        MethodSummary row;
        row.method = s.method;
        row.n = static_cast<std::int64_t>(s.psnr_values.size());

        std::vector<double> finite_psnr;
        finite_psnr.reserve(s.psnr_values.size());
        for (double v : s.psnr_values) {
            if (std::isinf(v)) {
                ++row.psnr_infinite_count;
            } else {
                finite_psnr.push_back(v);
            }
        }
        auto mean_std = [](const std::vector<double>& vs) {
            if (vs.empty()) return std::pair<double, double>{0.0, 0.0};
            double mean = 0.0;
            for (double v : vs) mean += v;
            mean /= static_cast<double>(vs.size());
            double var = 0.0;
            for (double v : vs) var += (v - mean) * (v - mean);
            var /= static_cast<double>(vs.size());
            return std::pair<double, double>{mean, std::sqrt(var)};
        };
        std::tie(row.psnr_mean, row.psnr_std) = mean_std(finite_psnr);
        std::tie(row.ssim_mean, row.ssim_std) = mean_std(s.ssim_values);
        if (!finite_psnr.empty() || row.psnr_infinite_count == 0) {
            report.rows.push_back(row);
        } else {
            // Every image was a perfect reconstruction; report infinities.
            row.psnr_mean = std::numeric_limits<double>::infinity();
            row.psnr_std = 0.0;
            report.rows.push_back(row);
        }
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const MethodSummary& a, const MethodSummary& b) { return a.method < b.method; });
    return report;
}

std::string EvalReport::to_csv() const {
    std::string out = "method,n,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
    char buf[64];
    auto fmt = [&buf](double v) -> std::string {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return buf;
    };
    for (const auto& row : rows) {
        out += row.method;
        out += ',';
        out += std::to_string(row.n);
        out += ',';
        out += fmt(row.psnr_mean);
        out += ',';
        out += fmt(row.psnr_std);
        out += ',';
        out += fmt(row.ssim_mean);
        out += ',';
        out += fmt(row.ssim_std);
        out += '\n';
    }
    return out;
}

}  // namespace nusr
