#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mk::rng {

/// Philox4x32-10 keyed counter block cipher (Salmon et al., SC'11).
/// Counter-based generation is what makes the sampling contract hold:
/// sample i reads stream (seed, stream_id) at counter positions that do
/// not depend on which worker thread asks, so results are identical for
/// any worker count.
struct Philox4x32 {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

/// splitmix64 finalizer; used to stretch and mix stream identifiers.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derives a substream identifier from a tag and up to two indices.
/// Distinct (tag, i, j) triples map to distinct streams up to the 2^-64
/// collision probability of the mix, which is good enough for desk-scale
/// sample counts.
inline std::uint64_t substream(std::uint64_t tag, std::uint64_t i = 0, std::uint64_t j = 0) {
    return mix64(mix64(mix64(tag) ^ i) ^ j);
}

// Stream tags for the independent sampling contexts in this project.
inline constexpr std::uint64_t kTagBridge = 0x42524944u;  // per-path bridge noise
inline constexpr std::uint64_t kTagField = 0x464C4421u;   // per-realization field noise
inline constexpr std::uint64_t kTagBrownian = 0x42524F57u;

/// One independent random stream: key = global seed, counter prefix = stream
/// id, low counter words advance as values are drawn. Draws never depend on
/// any other stream's state.
class Stream {
  public:
    Stream(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          prefix_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {}

    std::uint32_t next_u32() {
        if (at_ == 4) refill();
        return buf_[at_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        return (static_cast<std::uint64_t>(next_u32()) << 32) | lo;
    }

    /// Uniform double in (0, 1]; 53-bit resolution, never returns 0 so it is
    /// safe under log().
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; caches the paired draw.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

  private:
    void refill() {
        buf_ = Philox4x32::block({static_cast<std::uint32_t>(counter_),
                                  static_cast<std::uint32_t>(counter_ >> 32), prefix_[0],
                                  prefix_[1]},
                                 key_);
        ++counter_;
        at_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> prefix_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int at_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace mk::rng
