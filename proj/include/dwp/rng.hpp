#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "dwp/tensor.hpp"

namespace dwp {

/// Deterministic xoshiro256++ generator. We roll our own normal sampler so
/// that every stream is reproducible bit-for-bit independent of the standard
/// library implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 expansion of the seed into the full state
        uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            word = z ^ (z >> 31);
        }
        has_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive integer range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(Tensor& t) {
        for (auto& x : t.v) x = normal();
    }

    void fill_normal(Tensor& t, double mean, double stddev) {
        for (auto& x : t.v) x = mean + stddev * normal();
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (int64_t i = static_cast<int64_t>(xs.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(0, i);
            std::swap(xs[static_cast<size_t>(i)], xs[static_cast<size_t>(j)]);
        }
    }

private:
    uint64_t state_[4];
    bool has_spare_;
    double spare_;
};

/// FNV-1a over a label, mixed into a base seed. Used to derive independent
/// streams per (seed, purpose) so parallel execution order cannot change
/// results.
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL ^ base;
    for (char c : label) {
        h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    // final avalanche
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

inline uint64_t derive_seed(uint64_t base, std::string_view label, int64_t index) {
    uint64_t h = derive_seed(base, label);
    h ^= 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(index);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 31;
    return h;
}

}  // namespace dwp
