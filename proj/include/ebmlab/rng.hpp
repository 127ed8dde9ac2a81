#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ebmlab {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent 64-bit key from a parent key and a list of indices.
template <typename... Ints>
constexpr std::uint64_t derive_key(std::uint64_t parent, Ints... idx) noexcept {
    std::uint64_t k = splitmix64(parent);
    ((k = splitmix64(k ^ splitmix64(static_cast<std::uint64_t>(idx) + 0x632be59bd9b4e019ULL))), ...);
    return k;
}

/// Counter-based random stream: the n-th draw is a pure function of (key, n),
/// so any stream can be replayed without carrying generator state around.
class CounterStream {
public:
    constexpr explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t next_u64() noexcept { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace ebmlab
