#include "codesum/corpus/example.hpp"

#include <unordered_map>

#include "codesum/errors.hpp"

namespace codesum {

Example encode_with_copy(const std::vector<std::string>& code, const std::vector<std::string>& summary,
                         const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
    Example ex;
    ex.code_tokens = code;
    ex.summary_tokens = summary;
    const auto base = static_cast<std::int64_t>(tgt_vocab.size());
    std::unordered_map<std::string, std::int64_t> oov_index;
    for (const std::string& tok : code) {
        ex.code_ids.push_back(src_vocab.id(tok));
        if (tgt_vocab.contains(tok)) {
            ex.src_extended_ids.push_back(tgt_vocab.id(tok));
            continue;
        }
        auto [it, inserted] = oov_index.emplace(tok, static_cast<std::int64_t>(ex.oov_list.size()));
        if (inserted) {
            ex.oov_list.push_back(tok);
        }
        ex.src_extended_ids.push_back(base + it->second);
    }
    for (const std::string& tok : summary) {
        const std::int64_t id = tgt_vocab.id(tok);
        ex.summary_ids.push_back(id);
        if (id == Vocabulary::kUnk && !tgt_vocab.contains(tok)) {
            const auto it = oov_index.find(tok);
            ex.summary_extended_ids.push_back(it == oov_index.end() ? Vocabulary::kUnk : base + it->second);
        } else {
            ex.summary_extended_ids.push_back(id);
        }
    }
    return ex;
}

std::string extended_token(std::int64_t id, const Vocabulary& tgt_vocab, const std::vector<std::string>& oov_list) {
    const auto base = static_cast<std::int64_t>(tgt_vocab.size());
    if (id >= 0 && id < base) {
        return tgt_vocab.token(id);
    }
    if (id >= base && id < base + static_cast<std::int64_t>(oov_list.size())) {
        return oov_list[static_cast<std::size_t>(id - base)];
    }
    throw ContractError("extended id " + std::to_string(id) + " outside vocabulary of " + std::to_string(base) +
                        " plus " + std::to_string(oov_list.size()) + " copied tokens");
}

} // namespace codesum
