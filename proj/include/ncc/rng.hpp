#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ncc::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

}  // namespace detail

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline Counter philox4x32(Counter ctr, Key key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        detail::mulhilo(kMul0, ctr[0], hi0, lo0);
        detail::mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed for replicate `replicate` of grid point `point`. Depends only on its
/// arguments, so results do not depend on which worker ran the replicate.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t point,
                                 std::uint64_t replicate) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ point);
    h = splitmix64(h ^ (replicate + 0x632BE59BD9B4E019ull));
    return h;
}

/// Stream identifiers. Each consumer of randomness inside one replicate owns
/// a disjoint stream, so adding draws to one never shifts another.
enum class StreamId : std::uint64_t {
    entry_times = 1,
    outcomes = 2,
    randomization = 16,  // + period index
};

inline std::uint64_t stream_id(StreamId id, std::uint64_t offset = 0) {
    return static_cast<std::uint64_t>(id) + offset;
}

/// Block `index` of stream `stream` under key `seed`: 128 random bits.
inline Counter block_at(std::uint64_t seed, std::uint64_t stream,
                        std::uint64_t index) {
    const Key key{static_cast<std::uint32_t>(seed),
                  static_cast<std::uint32_t>(seed >> 32)};
    const Counter ctr{static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    return philox4x32(ctr, key);
}

/// 53-bit uniform on [0, 1).
inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

/// Box-Muller transform of two uniforms on [0, 1); cosine branch only.
inline double box_muller(double u1, double u2) {
    const double radius = std::sqrt(-2.0 * std::log1p(-u1));
    return radius * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential 64-bit generator over one counter-based stream. Satisfies
/// UniformRandomBitGenerator.
class Stream {
   public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() {
        if (used_ == 2) {
            const Counter block = block_at(seed_, stream_, next_block_++);
            buffer_[0] = join(block[0], block[1]);
            buffer_[1] = join(block[2], block[3]);
            used_ = 0;
        }
        return buffer_[used_++];
    }

    double uniform() { return to_unit((*this)()); }

    double normal() {
        const double u1 = uniform();
        return box_muller(u1, uniform());
    }

    /// Uniform integer on [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % n;
    }

   private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t next_block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int used_ = 2;
};

}  // namespace ncc::rng
