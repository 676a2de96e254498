#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "codesum/corpus/dataset.hpp"
#include "codesum/numerics/rng.hpp"

namespace codesum::synthetic {

/// Method-like snippets whose summary names the method's identifier, e.g.
/// "private int get qwhzre ( ) { return qwhzre ; }" -> "returns the qwhzre".
/// Identifiers are fresh lowercase words not in `used`; they are added to it.
std::vector<Record> identifier_copy(std::size_t count, Rng& rng, std::unordered_set<std::string>& used);

/// A random filler prefix of length in [min_prefix, max_prefix], the token
/// "mark", three filler tokens and a two-token suffix. The summary is the
/// three tokens after the marker.
std::vector<Record> relative_offset(std::size_t count, Rng& rng, std::size_t min_prefix, std::size_t max_prefix);

/// 5..9 filler tokens with "mark" somewhere inside; the summary is the token
/// right after the marker followed by the token right before it.
std::vector<Record> direction(std::size_t count, Rng& rng);

/// Splits the bundled datasets are written from (tools/make_synthetic).
struct Bundle {
    std::vector<Record> copy_train, copy_valid, copy_test;
    std::vector<Record> offset_train, offset_valid, offset_test;
    std::vector<Record> direction_train, direction_valid, direction_test;
    std::vector<Record> overfit;
};
Bundle make_bundle(std::uint64_t seed = 2020);

} // namespace codesum::synthetic
