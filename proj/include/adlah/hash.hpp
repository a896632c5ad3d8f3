#pragma once

#include <cstdint>
#include <string_view>

namespace adlah {

// Stable, seedless 64-bit string hash (FNV-1a). Fixed at build time: golden
// values in the test suite and persisted indicator layouts depend on it.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// splitmix64 finalizer; used to mix seeds and derive per-stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, name). Adding a stream with
// a new name never perturbs existing streams.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
    return mix64(seed ^ fnv1a64(name));
}

}  // namespace adlah
