#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "randadj/stats.hpp"

namespace randadj {

/// Deterministic random stream: std::mt19937_64 with all variate transforms
/// spelled out here, so draws are identical across platforms and library
/// versions. Substreams are derived from (master seed, counter), never from
/// scheduling order, which keeps parallel simulations bit-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Counter-indexed substream, e.g. one per Monte Carlo replicate.
    static Rng substream(std::uint64_t master, std::uint64_t counter) {
        return Rng(mix64(master ^ mix64(counter + 0x632be59bd9b4e019ull)));
    }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on (0,1): 53 significant bits, offset by half a grid cell so
    /// the endpoints are never produced.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via the inverse CDF applied to uniform().
    double normal() { return normal_quantile(uniform()); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (-n) % n;  // 2^64 mod n
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x < threshold);
        return x % n;
    }

    /// Fisher–Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// SplitMix64 finalizer; used for seed derivation.
    static std::uint64_t mix64(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace randadj
