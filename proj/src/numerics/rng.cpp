#include "codesum/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "codesum/errors.hpp"

namespace codesum {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t hash_string(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) : state_{mix64(seed + kGolden), 0} {}

Rng Rng::from_state(State state) {
    Rng r;
    r.state_ = state;
    return r;
}

Rng Rng::split(std::string_view label) const {
    Rng child;
    child.state_ = {mix64(state_.key ^ mix64(hash_string(label))), 0};
    return child;
}

Rng Rng::split(std::uint64_t index) const {
    Rng child;
    child.state_ = {mix64(state_.key + mix64(index ^ 0x5851F42D4C957F2DULL)), 0};
    return child;
}

std::uint64_t Rng::next_u64() {
    ++state_.counter;
    return mix64(state_.key + state_.counter * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) {
        u1 = 1e-300;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw ContractError("Rng::below requires a positive bound");
    }
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
}

} // namespace codesum
