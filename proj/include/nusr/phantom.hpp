#pragma once

#include "nusr/tensor.hpp"

namespace nusr {

// Synthetic head-like test images: an elliptical "skull" ring around a brain
// interior scattered with nested soft-edged ellipses in distinct intensity
// bands, optionally shaded by a smooth gradient. A stand-in for real scans so
// the full pipeline runs without external data.
struct PhantomSpec {
    std::int64_t count = 1;
    std::int64_t size = 256;
    std::uint64_t seed = 0;
    std::int64_t min_ellipses = 3;   // inner structures per phantom
    std::int64_t max_ellipses = 7;
    bool texture = true;             // smooth intensity gradient across the head
    // Width of the soft tissue boundaries in pixels (partial-volume rolloff).
    double edge_softness_px = 1.5;
    // Keeps generated sizes compatible with the downsampling depth of the
    // model they are destined for (2^(levels-1)).
    std::int64_t level_divisor = 4;

    void validate() const;
};

// Deterministic: image i depends only on (spec, seed, i), so regeneration and
// parallel generation agree byte-for-byte. Every phantom contains at least
// two distinct intensities (background and skull), so it is normalizable.
Tensor make_phantom(const PhantomSpec& spec, std::int64_t index);  // -> [1,1,size,size]

std::vector<Tensor> make_phantoms(const PhantomSpec& spec);

}  // namespace nusr
