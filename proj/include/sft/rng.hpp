#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sft::rng {

// splitmix64 finalizer; the workhorse mixer behind every stream here.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// 64-bit FNV-1a over raw bytes (also the checkpoint payload digest).
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s) { return fnv1a(s.data(), s.size()); }

// Derive an independent stream key from (seed, stream tag).
inline uint64_t derive(uint64_t seed, uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream * 0xd6e8feb86659fd93ULL + 1));
}

// Counter-based draw: value i of a stream never depends on draws j != i,
// so generation order (or thread count) cannot change results.
inline uint64_t at(uint64_t key, uint64_t counter) {
    return mix64(key ^ (counter * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform(uint64_t key, uint64_t counter) {
    return static_cast<double>(at(key, counter) >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). n must be > 0.
inline uint64_t below(uint64_t key, uint64_t counter, uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(at(key, counter)) * n) >> 64);
}

// Standard normal via Box-Muller; consumes counters 2c and 2c+1.
inline double normal(uint64_t key, uint64_t counter) {
    double u1 = static_cast<double>((at(key, 2 * counter) >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform(key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Seeded in-place Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, uint64_t key) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(below(key, i, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace sft::rng
