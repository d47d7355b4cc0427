#pragma once

#include "aggdp/error.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace aggdp {

/**
 * Counter-based 64-bit generator.
 *
 * Output k of a stream with key K is splitmix64_finalize(K + (k + 1) * GOLDEN),
 * which is exactly the SplitMix64 sequence seeded with K. The output depends only
 * on (key, counter), so any language that reproduces the finalizer reproduces the
 * stream bit for bit.
 *
 * Stream splitting: stream s of seed S uses key splitmix64_finalize(S ^ splitmix64_finalize(s + 1)).
 * Stream 0 is reserved for the main process; worker w uses stream w + 1.
 */
class CounterRng {
public:
    using result_type = std::uint64_t;

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(stream == 0 ? seed : finalize(seed ^ finalize(stream + 1))) {}

    static constexpr std::uint64_t finalize(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }

    result_type operator()() noexcept {
        ++counter_;
        return finalize(key_ + counter_ * kGolden);
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound) by rejection, no modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        detail::require(bound > 0, "CounterRng::below: bound must be positive");
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % bound;
    }

    /// Index drawn from nonnegative weights (need not be normalized).
    std::size_t discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        detail::require(total > 0.0, "CounterRng::discrete: weights sum to zero");
        const double target = uniform() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (weights[k] <= 0.0) continue;
            acc += weights[k];
            last_positive = k;
            if (target < acc) return k;
        }
        return last_positive;
    }

    /// Fisher-Yates shuffle with a fixed, documented draw order (back to front).
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t k = items.size(); k > 1; --k) {
            const std::size_t j = static_cast<std::size_t>(below(k));
            std::swap(items[k - 1], items[j]);
        }
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace aggdp
