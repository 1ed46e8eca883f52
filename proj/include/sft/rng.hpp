#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace sft {

// Deterministic counter-seeded RNG (splitmix64 core). Streams are derived by
// hashing a (seed, tag, index...) tuple, so any sample or noise field can be
// regenerated independently of evaluation order. All derived values are
// computed from explicit integer arithmetic; nothing depends on libstdc++
// distribution internals, which keeps outputs byte-stable across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
        // one splitmix64 step over h xor v
        std::uint64_t z = (h ^ v) + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Derived stream for a tagged counter tuple.
    static Rng stream(std::uint64_t seed, std::uint64_t tag,
                      std::uint64_t a = 0, std::uint64_t b = 0) {
        std::uint64_t h = mix(seed, 0x5f75ee1ec7ed0000ULL ^ tag);
        h = mix(h, a);
        h = mix(h, b);
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). Multiply-shift; bias is < 2^-60 for the
    // ranges used here.
    std::uint64_t next_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Uniform float in [0, 1) with 24 mantissa bits.
    float next_float() {
        return static_cast<float>(next_u64() >> 40) * 0x1p-24f;
    }

    // Uniform double in [0, 1) with 53 mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1p-53;
    }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * next_float();
    }

    // Fisher-Yates over an index vector.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace sft
