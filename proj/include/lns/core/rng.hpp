#pragma once

#include <cstdint>
#include <random>

namespace lns {

/// splitmix64; used to derive independent stream seeds from one base seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic RNG with explicit draw helpers. One instance per purpose
/// (init, sampling, data generation); never shared between threads.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    double gaussian(double mean = 0.0, double std = 1.0) {
        return std::normal_distribution<double>(mean, std)(gen_);
    }

    /// integer in [0, n)
    int64_t index(int64_t n) {
        return std::uniform_int_distribution<int64_t>(0, n - 1)(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace lns
