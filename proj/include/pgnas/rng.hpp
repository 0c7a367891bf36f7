#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pgnas {

// 64-bit finalizer (splitmix64). Bijective, well mixed; the basis of every
// random draw in the project.
inline constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline constexpr uint64_t hash_bytes(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline constexpr uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ mix64(b));
}

// Counter-based generator. Draw i of stream (seed, tag) is
// mix64(key + i) with key = hash(seed, tag); there is no hidden state, so
// any draw can be replayed from (seed, tag, index) alone. Distinct tags give
// independent streams, which is how training, search and data generation
// stay decoupled under one global seed.
class CounterRng {
  public:
    CounterRng(uint64_t seed, std::string_view tag)
        : key_(hash_combine(seed, hash_bytes(tag))) {}

    // Uniform draw strictly inside (0,1); safe to pass through logit().
    double uniform() { return uniform_at(next_++); }

    double uniform_at(uint64_t i) const {
        return static_cast<double>((mix64(key_ + i) >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (two uniforms per draw).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    uint64_t bits() { return mix64(key_ + next_++); }

    uint64_t key() const { return key_; }

  private:
    uint64_t key_;
    uint64_t next_ = 0;
};

}  // namespace pgnas
