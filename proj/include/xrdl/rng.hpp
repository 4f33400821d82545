#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <utility>

namespace xrdl {

/// Deterministic pseudo-random generator used for initialization, dropout
/// masks, augmentation and shuffling.
///
/// Algorithm: xoshiro256** (Blackman & Vigna), a member of the xorshift
/// family. The 256-bit state is filled from the 64-bit seed by four
/// successive splitmix64 outputs:
///
///     z  = (x += 0x9E3779B97F4A7C15)
///     z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///     z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
///     out = z ^ (z >> 31)
///
/// Each step of xoshiro256** returns rotl(s1 * 5, 7) * 9 and then advances
///
///     t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
///
/// Doubles in [0,1) take the top 53 bits: (next() >> 11) * 2^-53. Only integer
/// arithmetic is involved before that final scaling, so the stream is
/// identical on every platform.
class rng {
  public:
    using result_type = std::uint64_t;

    explicit rng(std::uint64_t seed = 0) noexcept : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            word = splitmix64(x);
        }
    }

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    std::uint64_t operator()() noexcept { return next_u64(); }
    static constexpr std::uint64_t min() noexcept { return 0; }
    static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

    /// Uniform double in [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) {
            return 0;
        }
        const std::uint64_t limit = max() - (max() % n);
        std::uint64_t v = next_u64();
        while (v >= limit) {
            v = next_u64();
        }
        return v % n;
    }

    /// Independent child generator; advances this generator by one draw.
    rng split() noexcept { return rng{next_u64()}; }

    /// Seed for stream `stream` of a base seed, independent of any generator state.
    static std::uint64_t derive(std::uint64_t base, std::uint64_t stream) noexcept {
        std::uint64_t x = base ^ (stream * 0xD1B54A32D192ED03ULL);
        splitmix64(x);
        return splitmix64(x);
    }

    /// In-place Fisher-Yates shuffle.
    template <typename Range>
    void shuffle(Range& items) noexcept {
        const std::size_t n = std::size(items);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

}  // namespace xrdl
