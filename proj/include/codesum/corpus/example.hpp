#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codesum/corpus/vocabulary.hpp"

namespace codesum {

/// One (code, summary) pair with its copy annotations.
///
/// Extended ids live in the target vocabulary space: a source token that the
/// target vocabulary knows keeps its target id, any other source token gets
/// tgt_vocab.size() + its index in oov_list (first-occurrence order).
struct Example {
    std::vector<std::string> code_tokens;
    std::vector<std::string> summary_tokens;
    std::vector<std::int64_t> code_ids;     ///< source vocabulary, UNK for OOV
    std::vector<std::int64_t> summary_ids;  ///< target vocabulary, UNK for OOV
    std::vector<std::int64_t> src_extended_ids;
    std::vector<std::int64_t> summary_extended_ids;
    std::vector<std::string> oov_list;
};

Example encode_with_copy(const std::vector<std::string>& code, const std::vector<std::string>& summary,
                         const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

/// Inverse of the extended-id mapping: ids below tgt_vocab.size() through the
/// vocabulary, the rest through oov_list. Throws ContractError when out of range.
std::string extended_token(std::int64_t id, const Vocabulary& tgt_vocab, const std::vector<std::string>& oov_list);

} // namespace codesum
