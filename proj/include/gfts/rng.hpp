#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gfts {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic child seed from a base seed and any number of integer or
/// string keys. Used to give each (series, horizon, origin) its own stream.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t base, const Keys&... keys) noexcept {
    std::uint64_t s = splitmix64(base);
    auto mix = [&s](const auto& k) {
        if constexpr (std::is_convertible_v<decltype(k), std::string_view>) {
            s = splitmix64(s ^ fnv1a(std::string_view(k)));
        } else {
            s = splitmix64(s ^ static_cast<std::uint64_t>(k));
        }
    };
    (mix(keys), ...);
    return s;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, n), unbiased (Lemire's multiply-shift with rejection).
    std::uint64_t index(std::uint64_t n) {
        std::uint64_t x = engine_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = engine_();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        return std::normal_distribution<double>(mean, sd)(engine_);
    }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double poisson(double mean) {
        if (mean <= 0.0) return 0.0;
        return static_cast<double>(std::poisson_distribution<long long>(mean)(engine_));
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace gfts
