#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "codesum/corpus/example.hpp"
#include "codesum/numerics/rng.hpp"

namespace codesum {

/// Padded mini-batch, row-major B x S and B x T id grids.
struct Batch {
    std::size_t batch_size = 0;
    std::size_t src_len = 0; ///< S
    std::size_t tgt_len = 0; ///< T = truncated summary length + 1
    std::vector<std::int64_t> src_ids;
    std::vector<std::int64_t> src_extended_ids;
    std::vector<std::uint8_t> src_mask; ///< 1 on real tokens
    std::vector<std::int64_t> tgt_in_ids;           ///< BOS-prefixed
    std::vector<std::int64_t> tgt_out_extended_ids; ///< EOS-suffixed, extended ids
    std::vector<std::uint8_t> tgt_mask;             ///< 1 on real target positions
    std::size_t max_oov = 0;
    /// Per row: index of the source example in the input list.
    std::vector<std::size_t> origin;
    /// Examples dropped because their code was empty after truncation.
    std::size_t skipped = 0;
};

/// Truncates, pads and masks. Summary extended ids whose copied token no
/// longer occurs in the truncated source fall back to UNK. Throws
/// ContractError on an empty input list, or when every example is skipped.
Batch make_batch(std::span<const Example> examples, std::size_t max_src_len, std::size_t max_tgt_len);

/// Epoch plan: example indices grouped into batches of at most
/// `batch_size`. Indices are shuffled, sorted by source length inside pools
/// of `pool_batches` batches so rows of a batch have similar lengths, and the
/// batch order is shuffled again.
std::vector<std::vector<std::size_t>> bucketed_batches(std::span<const Example> examples, std::size_t batch_size,
                                                       Rng& rng, std::size_t pool_batches = 50);

} // namespace codesum
