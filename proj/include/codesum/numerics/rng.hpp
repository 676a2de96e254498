#pragma once

#include <cstdint>
#include <string_view>

namespace codesum {

/// Counter-based generator (SplitMix64 output function over a keyed counter).
///
/// Streams are derived with split(): a child stream depends only on the
/// parent key and the split label, never on how many values the parent has
/// already produced. There is no global generator anywhere in the library.
class Rng {
  public:
    struct State {
        std::uint64_t key = 0;
        std::uint64_t counter = 0;
        bool operator==(const State&) const = default;
    };

    explicit Rng(std::uint64_t seed = 0);

    static Rng from_state(State state);
    State state() const { return state_; }

    Rng split(std::string_view label) const;
    Rng split(std::uint64_t index) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller (two draws per call).
    double normal();
    /// Uniform integer on [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);

  private:
    State state_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view text);

} // namespace codesum
