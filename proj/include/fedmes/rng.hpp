#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace fedmes {

// SplitMix64 mix step; the basis for all seed derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Folds tags into a base seed so every (client, task, round, purpose) site
// draws from its own stream. Stateless, so results do not depend on the
// order in which parallel workers reach their sampling sites.
template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
    std::uint64_t s = splitmix64(base);
    ((s = splitmix64(s ^ static_cast<std::uint64_t>(tags))), ...);
    return s;
}

// mt19937_64 core with hand-rolled draws. The engine itself is bit-exact by
// the standard; avoiding std:: distributions keeps the derived doubles and
// shuffles identical across standard library implementations too.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the sine half of the pair is discarded
    // to keep the generator stateless between calls.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    // Unbiased integer in [0, n) by rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t rem = (max % n + 1) % n;  // 2^64 mod n
        const std::uint64_t cutoff = max - rem;
        std::uint64_t u = next_u64();
        while (rem != 0 && u > cutoff) u = next_u64();
        return u % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), returned ascending.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        const std::size_t take = std::min(k, n);
        for (std::size_t i = 0; i < take; ++i) {
            std::swap(idx[i], idx[i + static_cast<std::size_t>(below(n - i))]);
        }
        idx.resize(take);
        std::sort(idx.begin(), idx.end());
        return idx;
    }

private:
    static constexpr double kTwoPi = 6.28318530717958647692;
    std::mt19937_64 gen_;
};

}  // namespace fedmes
