#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace reprint {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based stream generator. A stream is identified by a seed plus an
/// arbitrary list of integer keys, so the values drawn for one work item do
/// not depend on how many other items were processed before it or on which
/// thread runs it. Satisfies UniformRandomBitGenerator.
class KeyedRng {
public:
    using result_type = std::uint64_t;

    explicit KeyedRng(std::uint64_t seed) noexcept : state_(mix64(seed)) {}

    KeyedRng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept
        : state_(mix64(seed)) {
        for (auto k : keys) {
            state_ = mix64(state_ ^ mix64(k + 0x632be59bd9b4e019ULL));
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Stream tags used to keep the per-purpose streams of one seed disjoint.
namespace stream {
inline constexpr std::uint64_t reprint = 0x5245'5052;
inline constexpr std::uint64_t baseline = 0x4241'5345;
inline constexpr std::uint64_t scenario = 0x5343'454e;
inline constexpr std::uint64_t synth = 0x5359'4e54;
inline constexpr std::uint64_t train = 0x5452'4e00;
} // namespace stream

} // namespace reprint
