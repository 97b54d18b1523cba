#include "givt/rng.hpp"

#include <cmath>
#include <numbers>

namespace givt {

namespace {

constexpr std::uint64_t mix64(std::uint64_t x)
{
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_label(std::string_view label)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

RngKey::RngKey(std::uint64_t seed) : value_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

RngKey RngKey::child(std::uint64_t index) const
{
    RngKey k;
    k.value_ = mix64(value_ ^ mix64(index + 0x243f6a8885a308d3ULL));
    return k;
}

RngKey RngKey::child(std::string_view label) const
{
    return child(hash_label(label));
}

std::uint64_t Rng::next_u64()
{
    const std::uint64_t c = counter_++;
    return mix64(key_.value() ^ mix64(c));
}

double Rng::uniform()
{
    // 53 random bits, shifted off zero: (m + 0.5) / 2^53
    const std::uint64_t m = next_u64() >> 11;
    return (static_cast<double>(m) + 0.5) * 0x1.0p-53;
}

double Rng::normal()
{
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gumbel()
{
    return -std::log(-std::log(uniform()));
}

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n <= 1) {
        return 0;
    }
    // Lemire-style rejection for an unbiased result.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % n;
}

} // namespace givt
