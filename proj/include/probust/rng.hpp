#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "probust/common.hpp"

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC'11).
// Every draw is a pure function of (seed, stream, index, block), so samples
// are reproducible independent of evaluation order and worker count.

namespace probust {

struct RngKey {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    // Derives a child stream for a named sub-purpose. Tags only have to be
    // distinct per call site; the mix is splitmix64.
    [[nodiscard]] RngKey sub(std::uint64_t tag) const {
        std::uint64_t z = stream + 0x9e3779b97f4a7c15ULL * (tag + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return RngKey{seed, z ^ (z >> 31)};
    }
};

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    constexpr std::uint32_t kMulA = 0xD2511F53u;
    constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    const std::uint64_t prod0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
    const std::uint64_t prod1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(prod0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(prod0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(prod1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(prod1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) philox_round(ctr, key);
    return ctr;
}

}  // namespace detail

// One deterministic substream of draws, keyed by (seed, stream, index).
// Successive draws advance an internal 32-bit block counter.
class PhiloxStream {
public:
    PhiloxStream(RngKey key, std::uint64_t index) : key_(key), index_(index) {}

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe to pass through log().
    double next_double_open() { return 1.0 - next_double(); }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; pairs are cached.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_double_open();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(next_double() * static_cast<double>(n)) % n;
    }

private:
    void refill() {
        const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(key_.seed),
                                                  static_cast<std::uint32_t>(key_.seed >> 32)};
        const std::array<std::uint32_t, 4> ctr = {
            block_, static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
            static_cast<std::uint32_t>(key_.stream) ^
                (static_cast<std::uint32_t>(key_.stream >> 32) * 0x9E3779B9u)};
        buf_ = detail::philox10(ctr, key);
        ++block_;
        pos_ = 0;
    }

    RngKey key_;
    std::uint64_t index_;
    std::uint32_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace probust
