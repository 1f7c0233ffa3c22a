#include "nusr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nusr/rng.hpp"

namespace nusr {

void PhantomSpec::validate() const {
    if (count < 0) {
        throw DomainError("phantom count must be non-negative, got " + std::to_string(count));
    }
    if (size < 16) {
        throw DomainError("phantom size must be at least 16, got " + std::to_string(size));
    }
    if (level_divisor < 1) {
        throw DomainError("phantom level divisor must be positive, got " +
                          std::to_string(level_divisor));
    }
    if (size % level_divisor != 0) {
        throw DomainError("phantom size " + std::to_string(size) +
                          " is not divisible by the model level divisor " +
                          std::to_string(level_divisor));
    }
    if (min_ellipses < 0 || max_ellipses < min_ellipses) {
        throw DomainError("phantom ellipse count range [" + std::to_string(min_ellipses) + ", " +
                          std::to_string(max_ellipses) + "] is invalid");
    }
    if (edge_softness_px <= 0.0) {
        throw DomainError("phantom edge softness must be positive, got " +
                          std::to_string(edge_softness_px));
    }
}

namespace {

struct Ellipse {
    double cx, cy;      // center, pixels
    double a, b;        // semi-axes, pixels
    double angle;       // radians
    double intensity;
};

// Alpha-composites one soft-edged ellipse over the canvas. The edge is
// feathered over `feather` pixels by converting the normalized ellipse
// coordinate into an approximate pixel distance.
void draw_ellipse(std::vector<double>& img, std::int64_t size, const Ellipse& e, double feather) {
    // Conservative bounding box around the rotated ellipse.
    const double reach = std::max(e.a, e.b) + feather + 1.0;
    const auto lo_x = static_cast<std::int64_t>(std::floor(e.cx - reach));
    const auto hi_x = static_cast<std::int64_t>(std::ceil(e.cx + reach));
    const auto lo_y = static_cast<std::int64_t>(std::floor(e.cy - reach));
    const auto hi_y = static_cast<std::int64_t>(std::ceil(e.cy + reach));
    const double min_axis = std::min(e.a, e.b);
    const double ct = std::cos(e.angle);
    const double st = std::sin(e.angle);
    for (std::int64_t y = std::max<std::int64_t>(0, lo_y); y <= std::min(size - 1, hi_y); ++y) {
        for (std::int64_t x = std::max<std::int64_t>(0, lo_x); x <= std::min(size - 1, hi_x);
             ++x) {
            const double dx = static_cast<double>(x) - e.cx;
            const double dy = static_cast<double>(y) - e.cy;
            const double u = (ct * dx + st * dy) / e.a;
            const double v = (-st * dx + ct * dy) / e.b;
            const double r = std::sqrt(u * u + v * v);
            // Signed distance from the boundary, in approximate pixels.
            const double dist = (1.0 - r) * min_axis;
            const double alpha = std::clamp(dist / feather + 0.5, 0.0, 1.0);
            if (alpha <= 0.0) continue;
            double& px = img[static_cast<std::size_t>(y * size + x)];
            px = px * (1.0 - alpha) + e.intensity * alpha;
        }
    }
}

}  // namespace

Tensor make_phantom(const PhantomSpec& spec, std::int64_t index) {
    spec.validate();
    if (index < 0) {
        throw DomainError("phantom index must be non-negative, got " + std::to_string(index));
    }
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
    const double s = static_cast<double>(spec.size);

    std::vector<double> img(static_cast<std::size_t>(spec.size * spec.size), 0.0);

    // Head outline: scalp/skull ring around the cortical interior. Coronal
    // heads are taller than wide, so the vertical semi-axis dominates.
    Ellipse skull;
    skull.cx = s * rand_range(rng, 0.48, 0.52);
    skull.cy = s * rand_range(rng, 0.48, 0.52);
    skull.a = s * rand_range(rng, 0.36, 0.42);
    skull.b = s * rand_range(rng, 0.40, 0.46);
    skull.angle = rand_range(rng, -0.25, 0.25);
    skull.intensity = rand_range(rng, 0.55, 0.65);
    draw_ellipse(img, spec.size, skull, spec.edge_softness_px);

    const double ring = std::max(2.5, 0.09 * s);
    Ellipse brain = skull;
    brain.a -= ring;
    brain.b -= ring;
    brain.intensity = rand_range(rng, 0.40, 0.48);
    draw_ellipse(img, spec.size, brain, spec.edge_softness_px);

    // Inner structures, drawn back-to-front with a vertical-elongation bias
    // (white-matter lobes and ventricles run superior-inferior in coronal
    // slices). The first is always a large bright lobe so the intensity
    // maximum sits on a bulky smooth structure, as in T1 contrast, rather
    // than on the thin ring.
    const std::int64_t span = spec.max_ellipses - spec.min_ellipses;
    const std::int64_t n_inner = spec.min_ellipses + (span > 0 ? rand_index(rng, span + 1) : 0);
    for (std::int64_t k = 0; k < n_inner; ++k) {
        Ellipse e;
        const double rx = rand_range(rng, -0.45, 0.45) * brain.a;
        const double ry = rand_range(rng, -0.45, 0.45) * brain.b;
        e.cx = brain.cx + rx;
        e.cy = brain.cy + ry;
        e.angle = rand_range(rng, -0.35, 0.35);
        const std::int64_t band = k == 0 ? 2 : rand_index(rng, 3);
        if (band == 0) {
            // Ventricle / CSF: dark, small.
            e.a = rand_range(rng, 0.06, 0.16) * brain.a;
            e.b = e.a * rand_range(rng, 1.2, 2.2);
            e.intensity = rand_range(rng, 0.10, 0.20);
        } else if (band == 1) {
            // Gray-matter patch: mid intensity, medium size.
            e.a = rand_range(rng, 0.10, 0.24) * brain.a;
            e.b = e.a * rand_range(rng, 1.1, 1.9);
            e.intensity = rand_range(rng, 0.45, 0.58);
        } else {
            // White-matter lobe: bright and bulky.
            e.a = rand_range(rng, 0.22, 0.38) * brain.a;
            e.b = e.a * rand_range(rng, 1.2, 1.8);
            e.intensity = rand_range(rng, 0.85, 0.98);
        }
        draw_ellipse(img, spec.size, e, spec.edge_softness_px);
    }

    if (spec.texture) {
        // Smooth illumination gradient across the whole head.
        const double gx = rand_range(rng, -0.25, 0.25);
        const double gy = rand_range(rng, -0.25, 0.25);
        for (std::int64_t y = 0; y < spec.size; ++y) {
            for (std::int64_t x = 0; x < spec.size; ++x) {
                const double fx = static_cast<double>(x) / s - 0.5;
                const double fy = static_cast<double>(y) / s - 0.5;
                img[static_cast<std::size_t>(y * spec.size + x)] *= 1.0 + gx * fx + gy * fy;
            }
        }
    }

    std::vector<scalar> data(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) data[i] = static_cast<scalar>(img[i]);
    return Tensor::from_data({1, 1, spec.size, spec.size}, data);
}

std::vector<Tensor> make_phantoms(const PhantomSpec& spec) {
    spec.validate();
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (std::int64_t i = 0; i < spec.count; ++i) {
        out.push_back(make_phantom(spec, i));
    }
    return out;
}

}  // namespace nusr
