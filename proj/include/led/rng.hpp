#pragma once

#include <cstdint>
#include <numbers>

#include "led/array.hpp"

namespace led {

// splitmix64 finalizer. All randomness in the project flows through this
// mixing function so identical seeds give identical streams everywhere.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Counter-based splitmix-style generator: draw i of stream `seed` is
// mix64(seed + i * golden). Streams for sub-tasks are derived with fork(),
// which keys a fresh seed off the parent, so per-scene generation can run
// in parallel while reproducing the sequential stream exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() { return mix64(seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    // Uniform in [0, 1) with 53 random bits.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Modulo reduction; bias is negligible for
    // the n << 2^64 range used here.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // One standard normal via Box-Muller (cosine branch). Consumes two
    // uniforms; the sine value is discarded to keep the stream layout simple.
    double next_normal() {
        double u1 = 1.0 - next_uniform();  // (0, 1], keeps log finite
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Fills with standard normals using full Box-Muller pairs; an odd tail
    // element uses the cosine branch only.
    void fill_normal(Array& a) {
        std::size_t n = a.size();
        std::size_t i = 0;
        while (i + 1 < n) {
            double u1 = 1.0 - next_uniform();
            double u2 = next_uniform();
            double r = std::sqrt(-2.0 * std::log(u1));
            double t = 2.0 * std::numbers::pi * u2;
            a[i++] = r * std::cos(t);
            a[i++] = r * std::sin(t);
        }
        if (i < n) a[i] = next_normal();
    }

    Array normal_array(std::vector<int> shape) {
        Array a(std::move(shape));
        fill_normal(a);
        return a;
    }

    // Independent child stream keyed by `key` (e.g. a scene index).
    Rng fork(std::uint64_t key) const { return Rng(mix64(seed_ ^ mix64(key))); }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace led
