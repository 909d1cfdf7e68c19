#pragma once

// All randomness in the library flows through Rng, a 64-bit Mersenne Twister
// (std::mt19937_64). Independent streams are derived from a root seed with
// SplitMix64 so that e.g. per-sample clustering seeds do not overlap. Results
// are reproducible across runs of the same build; distributions come from the
// standard library, so other standard libraries may produce other streams.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hg {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for the sub-stream addressed by `path` under `root`.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = splitmix64(root);
    for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

}  // namespace hg
