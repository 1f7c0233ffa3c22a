#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace nusr {

// splitmix64; used to derive independent seeds from (run seed, index) so
// per-sample streams never overlap.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

// Uniform in [0, 1). Hand-rolled instead of std::uniform_real_distribution so
// the stream is pinned down to the bit across standard library versions.
inline double rand_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + rand_unit(rng) * (hi - lo);
}

// Uniform integer in [0, n). Modulo bias is irrelevant for shuffling/sampling
// here and keeps the draw sequence trivially reproducible.
inline std::int64_t rand_index(std::mt19937_64& rng, std::int64_t n) {
    return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n));
}

template <typename T>
void shuffle_indices(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
        std::swap(v[static_cast<std::size_t>(i)],
                  v[static_cast<std::size_t>(rand_index(rng, i + 1))]);
    }
}

// Identity permutation of n indices, shuffled by a generator seeded from
// `seed` alone; a pure function of (n, seed).
inline std::vector<std::size_t> shuffle_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(splitmix64(seed));
    shuffle_indices(idx, rng);
    return idx;
}

}  // namespace nusr
