#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace ctfg {

// Deterministic splitmix64 generator. Every stochastic component takes an Rng
// (or a seed) explicitly; nothing reads global state, so runs with equal seeds
// are bit-identical regardless of thread count or call interleaving across
// independent streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Box-Muller, one fresh pair of uniforms per draw (no cached spare, so the
    // draw count of one stream never leaks into another).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
    std::size_t index(std::size_t n) {
        if (n <= 1) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<std::size_t>(x % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

    // Child stream keyed by id, independent of how much this stream has been
    // consumed. Equal (seed, id) always yields the same stream, which is what
    // lets per-rollout streams be drawn in any order (or in parallel).
    Rng derive(std::uint64_t id) const {
        std::uint64_t z = seed_ ^ (0x9E3779B97F4A7C15ull * (id + 0x632BE59BD9B4E019ull));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace ctfg
