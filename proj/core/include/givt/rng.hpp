#pragma once

#include <cstdint>
#include <string_view>

namespace givt {

/// Hierarchical key for counter-based random streams.
///
/// A key is derived from a root seed by a chain of `child()` calls
/// (seed -> task -> sample -> position -> channel -> step). Two streams with
/// the same derivation path produce the same numbers regardless of the order in
/// which they are created, which is what makes serial and parallel decoding agree.
class RngKey {
public:
    constexpr RngKey() = default;
    explicit RngKey(std::uint64_t seed);

    RngKey child(std::uint64_t index) const;
    RngKey child(std::string_view label) const;

    std::uint64_t value() const noexcept { return value_; }

    friend bool operator==(const RngKey&, const RngKey&) = default;

private:
    std::uint64_t value_ = 0;
};

/// Counter-based generator: output i is a pure function of (key, i).
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(RngKey key) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal();
    /// Standard Gumbel(0, 1).
    double gumbel();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::uint64_t counter() const noexcept { return counter_; }

private:
    RngKey key_;
    std::uint64_t counter_ = 0;
};

} // namespace givt
