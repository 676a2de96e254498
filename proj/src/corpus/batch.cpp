#include "codesum/corpus/batch.hpp"

#include <algorithm>
#include <unordered_set>

#include "codesum/errors.hpp"

namespace codesum {

Batch make_batch(std::span<const Example> examples, std::size_t max_src_len, std::size_t max_tgt_len) {
    if (examples.empty()) {
        throw ContractError("make_batch: no examples");
    }
    if (max_src_len == 0) {
        throw ConfigError("make_batch: max_src_len must be positive");
    }
    Batch batch;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (std::min(examples[i].code_ids.size(), max_src_len) == 0) {
            ++batch.skipped;
        } else {
            keep.push_back(i);
        }
    }
    if (keep.empty()) {
        throw ContractError("make_batch: every example has empty code");
    }
    for (std::size_t i : keep) {
        batch.src_len = std::max(batch.src_len, std::min(examples[i].code_ids.size(), max_src_len));
        batch.tgt_len = std::max(batch.tgt_len, std::min(examples[i].summary_ids.size(), max_tgt_len) + 1);
        batch.max_oov = std::max(batch.max_oov, examples[i].oov_list.size());
    }
    const std::size_t B = keep.size();
    const std::size_t S = batch.src_len;
    const std::size_t T = batch.tgt_len;
    batch.batch_size = B;
    batch.origin = keep;
    batch.src_ids.assign(B * S, Vocabulary::kPad);
    batch.src_extended_ids.assign(B * S, Vocabulary::kPad);
    batch.src_mask.assign(B * S, 0);
    batch.tgt_in_ids.assign(B * T, Vocabulary::kPad);
    batch.tgt_out_extended_ids.assign(B * T, Vocabulary::kPad);
    batch.tgt_mask.assign(B * T, 0);
    for (std::size_t row = 0; row < B; ++row) {
        const Example& ex = examples[keep[row]];
        const std::size_t s = std::min(ex.code_ids.size(), max_src_len);
        std::unordered_set<std::int64_t> present;
        for (std::size_t j = 0; j < s; ++j) {
            batch.src_ids[row * S + j] = ex.code_ids[j];
            batch.src_extended_ids[row * S + j] = ex.src_extended_ids[j];
            batch.src_mask[row * S + j] = 1;
            present.insert(ex.src_extended_ids[j]);
        }
        const std::size_t t = std::min(ex.summary_ids.size(), max_tgt_len);
        batch.tgt_in_ids[row * T] = Vocabulary::kBos;
        for (std::size_t j = 0; j < t; ++j) {
            batch.tgt_in_ids[row * T + j + 1] = ex.summary_ids[j];
            std::int64_t target = ex.summary_extended_ids[j];
            if (target != ex.summary_ids[j] && !present.contains(target)) {
                target = Vocabulary::kUnk;
            }
            batch.tgt_out_extended_ids[row * T + j] = target;
            batch.tgt_mask[row * T + j] = 1;
        }
        batch.tgt_out_extended_ids[row * T + t] = Vocabulary::kEos;
        batch.tgt_mask[row * T + t] = 1;
    }
    return batch;
}

} // namespace codesum

namespace codesum {

namespace {

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.below(i)]);
    }
}

} // namespace

std::vector<std::vector<std::size_t>> bucketed_batches(std::span<const Example> examples, std::size_t batch_size,
                                                       Rng& rng, std::size_t pool_batches) {
    if (batch_size == 0 || pool_batches == 0) {
        throw ConfigError("batch_size and pool size must be positive");
    }
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    shuffle(order, rng);

    const std::size_t pool = batch_size * pool_batches;
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += pool) {
        const std::size_t end = std::min(order.size(), start + pool);
        std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                             return examples[a].code_ids.size() < examples[b].code_ids.size();
                         });
        for (std::size_t b = start; b < end; b += batch_size) {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(end, b + batch_size)));
        }
    }
    shuffle(batches, rng);
    return batches;
}

} // namespace codesum
